//! Convergence in law of the walk: characteristic-function error on a compact
//! frequency set, Kolmogorov-Smirnov distance to the limit law, and studies
//! over a sequence of mesh widths.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{cauchy_cdf, green_cf, green_density, DiffusionSymbol, QuadParams, RadialDensity, RadialGrid};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, check_dim, default_trunc_radius, stability_sigma, LatticeKernel, DEFAULT_ZETA_TOL};
use crate::measure::OrderMeasure;
use crate::montecarlo::{build_sampler, run_walks, WalkEnsemble};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_XI_MAX: f64 = 10.0;
pub const DEFAULT_XI_POINTS: usize = 101;

/// Frequencies on `[-xi_max, xi_max]`, `points` per ray.
///
/// In one dimension this is a uniform grid. In the plane and in space the
/// law of the limit is radial, so the grid runs along the coordinate axis and
/// the lattice diagonals, where the anisotropy of the lattice is extremal.
pub fn xi_grid(dim: usize, xi_max: f64, points: usize) -> Result<Vec<Vec<f64>>> {
    check_dim(dim)?;
    if !(xi_max >= 0.0 && xi_max.is_finite()) || points == 0 {
        return Err(Error::Domain(format!("bad frequency grid: xi_max {xi_max}, {points} points")));
    }
    let line: Vec<f64> = if points == 1 {
        vec![0.0]
    } else {
        (0..points).map(|i| -xi_max + 2.0 * xi_max * i as f64 / (points - 1) as f64).collect()
    };
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for ones in 1..=dim {
        let c = 1.0 / (ones as f64).sqrt();
        dirs.push((0..dim).map(|i| if i < ones { c } else { 0.0 }).collect());
    }
    let mut grid = Vec::with_capacity(dirs.len() * points);
    for d in &dirs {
        for &s in &line {
            grid.push(d.iter().map(|c| c * s).collect());
        }
    }
    Ok(grid)
}

/// `max |p^n(-h xi) - e^{t B(xi)}|` over `xi_grid`, where `p` is the one-step
/// characteristic function of `kernel`.
pub fn cf_sup_error(
    kernel: &LatticeKernel,
    n_steps: usize,
    sym: &DiffusionSymbol,
    t: f64,
    xi_grid: &[Vec<f64>],
) -> Result<f64> {
    if kernel.dim() != sym.dim() {
        return Err(Error::Mismatch(format!("kernel dim {} vs symbol dim {}", kernel.dim(), sym.dim())));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let nyquist = PI / kernel.h();
    let mut worst: f64 = 0.0;
    for xi in xi_grid {
        if xi.len() != kernel.dim() {
            return Err(Error::Mismatch(format!("frequency of length {} in dimension {}", xi.len(), kernel.dim())));
        }
        let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > nyquist * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("|xi| = {norm} exceeds the lattice band pi/h = {nyquist}")));
        }
        let one = kernel.characteristic_function(xi);
        let walk = match i32::try_from(n_steps) {
            Ok(n) => one.powi(n),
            Err(_) => one.signum() * one.abs().powf(n_steps as f64),
        };
        worst = worst.max((walk - green_cf(sym, t, xi)).abs());
    }
    Ok(worst)
}

/// `sup_x |F_emp(x) - F(x)|` for samples against a continuous or atomic CDF.
///
/// Both one-sided limits of the empirical CDF are compared at every
/// distinct sample value, with `F(x-)` taken as `F(x)`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("empty sample".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::Invalid("sample contains NaN".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let m = x.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < x.len() {
        let mut j = i;
        while j < x.len() && x[j] == x[i] {
            j += 1;
        }
        let f = cdf(x[i]).clamp(0.0, 1.0);
        d = d.max((f - i as f64 / m).abs()).max((j as f64 / m - f).abs());
        i = j;
    }
    Ok(d)
}

/// Direction onto which an ensemble is reduced before the KS test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Coordinate(usize),
    Radial,
}

impl Default for Projection {
    fn default() -> Self {
        Projection::Coordinate(0)
    }
}

impl Projection {
    fn values(&self, ensemble: &WalkEnsemble) -> Result<Vec<f64>> {
        match *self {
            Projection::Coordinate(axis) if axis < ensemble.dim() => Ok(ensemble.coordinate(axis)),
            Projection::Coordinate(axis) => {
                Err(Error::Mismatch(format!("axis {axis} in dimension {}", ensemble.dim())))
            }
            Projection::Radial => Ok(ensemble.radii()),
        }
    }
}

/// KS distance between the projected ensemble and `cdf`.
pub fn ks_distance(ensemble: &WalkEnsemble, projection: Projection, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if ensemble.n_walkers() == 0 {
        return Err(Error::Invalid("empty ensemble".into()));
    }
    ks_statistic(&projection.values(ensemble)?, cdf)
}

/// CDF of a projection of the limit law `G(t, .)`.
#[derive(Debug, Clone)]
pub enum AnalyticLaw {
    /// Cauchy law of the given scale, for a single order 1.
    Cauchy { scale: f64 },
    /// One-dimensional marginal from a tabulated 1-D density.
    Marginal(RadialDensity),
    /// Law of `|X|` from a tabulated radial density.
    Radial(RadialDensity),
}

impl AnalyticLaw {
    /// Law of `projection` of `X ~ G(t, .)` on `R^dim`.
    ///
    /// Every coordinate marginal of a radial law with symbol `B(|xi|)` is the
    /// one-dimensional law with the same symbol.
    pub fn new(measure: &OrderMeasure, dim: usize, t: f64, projection: Projection, quad: &QuadParams) -> Result<Self> {
        check_dim(dim)?;
        match projection {
            Projection::Radial => {
                let sym = DiffusionSymbol::new(measure, dim)?;
                Ok(AnalyticLaw::Radial(green_density(&sym, t, &RadialGrid::Default, quad)?))
            }
            Projection::Coordinate(axis) if axis >= dim => {
                Err(Error::Mismatch(format!("axis {axis} in dimension {dim}")))
            }
            _ => match measure.as_single_atom() {
                Some(term) if term.alpha == 1.0 => Ok(AnalyticLaw::Cauchy { scale: t * term.weight }),
                _ => {
                    let sym = DiffusionSymbol::new(measure, 1)?;
                    Ok(AnalyticLaw::Marginal(green_density(&sym, t, &RadialGrid::Default, quad)?))
                }
            },
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            AnalyticLaw::Cauchy { scale } if *scale == 0.0 => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            AnalyticLaw::Cauchy { scale } => cauchy_cdf(*scale, x),
            AnalyticLaw::Marginal(d) => d.cdf(x).clamp(0.0, 1.0),
            AnalyticLaw::Radial(d) => d.cdf_radial(x).clamp(0.0, 1.0),
        }
    }
}

/// Knobs of [`refinement_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOptions {
    /// Safety factor on the largest stable time step.
    pub theta: f64,
    /// Fixed truncation radius; otherwise chosen from `trunc_length`.
    pub trunc_radius: Option<usize>,
    /// Physical truncation length; the default depends on the dimension.
    pub trunc_length: Option<f64>,
    pub xi_max: f64,
    pub xi_points: usize,
    /// Also test `|X|` against the radial law when `dim >= 2`.
    pub radial_ks: bool,
    pub zeta_tol: f64,
    pub quad: QuadParams,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            trunc_radius: None,
            trunc_length: None,
            xi_max: DEFAULT_XI_MAX,
            xi_points: DEFAULT_XI_POINTS,
            radial_ks: true,
            zeta_tol: DEFAULT_ZETA_TOL,
            quad: QuadParams::default(),
        }
    }
}

/// One mesh width of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub h: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub trunc_radius: usize,
    pub sigma: f64,
    pub p0: f64,
    pub tail_mass: f64,
    pub cf_sup_error: f64,
    pub ks_distance: f64,
    pub ks_radial: Option<f64>,
}

/// Result of [`refinement_study`], rows by decreasing `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub measure: OrderMeasure,
    pub dim: usize,
    pub t: f64,
    pub walkers: usize,
    pub seed: u64,
    pub options: StudyOptions,
    /// Radius of the frequency grid actually used, `min(xi_max, pi/h_0)`.
    pub xi_max_used: f64,
    pub rows: Vec<StudyRow>,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("bad report: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,tau,n_steps,trunc_radius,sigma,p0,tail_mass,cf_sup_error,ks_distance,ks_radial\n");
        for r in &self.rows {
            let radial = r.ks_radial.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.h, r.tau, r.n_steps, r.trunc_radius, r.sigma, r.p0, r.tail_mass, r.cf_sup_error, r.ks_distance, radial
            );
        }
        out
    }
}

/// Time step `theta * tau_max(h)` and `n = ceil(t / tau)`.
pub fn schedule(measure: &OrderMeasure, dim: usize, h: f64, t: f64, theta: f64, tol: f64) -> Result<(f64, usize)> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Invalid(format!("safety factor theta must lie in (0, 1], got {theta}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let tau = theta * stability_sigma(measure, dim, h, 0.0, tol)?.tau_max;
    let mut n = (t / tau).ceil() as usize;
    // n tau must land in [t, t + tau)
    while (n as f64) * tau < t {
        n += 1;
    }
    while n > 0 && ((n - 1) as f64) * tau >= t {
        n -= 1;
    }
    Ok((tau, n))
}

/// CF error and KS distance for each mesh width in `h_list`.
pub fn refinement_study(
    measure: &OrderMeasure,
    dim: usize,
    t: f64,
    h_list: &[f64],
    walkers: usize,
    seed: u64,
    options: &StudyOptions,
) -> Result<ConvergenceReport> {
    check_dim(dim)?;
    if h_list.is_empty() {
        return Err(Error::Invalid("h_list is empty".into()));
    }
    if h_list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::Invalid("mesh widths must be positive".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid(format!("h_list must be strictly decreasing, got {h_list:?}")));
    }
    if walkers == 0 {
        return Err(Error::Invalid("a study needs at least one walker".into()));
    }
    let xi_max_used = options.xi_max.min(PI / h_list[0]);
    let grid = xi_grid(dim, xi_max_used, options.xi_points)?;
    let sym = DiffusionSymbol::new(measure, dim)?;
    let law = AnalyticLaw::new(measure, dim, t, Projection::default(), &options.quad)?;
    let radial = if options.radial_ks && dim >= 2 {
        Some(AnalyticLaw::new(measure, dim, t, Projection::Radial, &options.quad)?)
    } else {
        None
    };
    let rows: Vec<Result<StudyRow>> = h_list
        .par_iter()
        .map(|&h| {
            let (tau, n_steps) = schedule(measure, dim, h, t, options.theta, options.zeta_tol)?;
            let radius = options.trunc_radius.unwrap_or_else(|| default_trunc_radius(dim, h, options.trunc_length));
            let kernel = build_kernel(measure, dim, h, tau, radius, options.zeta_tol)?;
            let cf = cf_sup_error(&kernel, n_steps, &sym, t, &grid)?;
            let ensemble = run_walks(&build_sampler(&kernel)?, n_steps, walkers, seed)?;
            let ks = ks_distance(&ensemble, Projection::default(), |x| law.cdf(x))?;
            let ks_radial = match &radial {
                Some(l) => Some(ks_distance(&ensemble, Projection::Radial, |x| l.cdf(x))?),
                None => None,
            };
            Ok(StudyRow {
                h,
                tau,
                n_steps,
                trunc_radius: radius,
                sigma: kernel.sigma(),
                p0: kernel.p0(),
                tail_mass: kernel.tail_mass(),
                cf_sup_error: cf,
                ks_distance: ks,
                ks_radial,
            })
        })
        .collect();
    Ok(ConvergenceReport {
        measure: measure.clone(),
        dim,
        t,
        walkers,
        seed,
        options: options.clone(),
        xi_max_used,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::empirical_cf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cauchy() -> OrderMeasure {
        OrderMeasure::single(1.0, 1.0).unwrap()
    }

    fn benchmark_error(h: f64) -> f64 {
        let m = cauchy();
        let (tau, n) = schedule(&m, 1, h, 1.0, 0.5, DEFAULT_ZETA_TOL).unwrap();
        let k = build_kernel(&m, 1, h, tau, default_trunc_radius(1, h, None), DEFAULT_ZETA_TOL).unwrap();
        let sym = DiffusionSymbol::new(&m, 1).unwrap();
        cf_sup_error(&k, n, &sym, 1.0, &xi_grid(1, 10.0, 101).unwrap()).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = xi_grid(1, 10.0, 101).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g[50], vec![0.0]);
        assert_eq!(g[0], vec![-10.0]);
        let g = xi_grid(3, 2.0, 5).unwrap();
        assert_eq!(g.len(), 15);
        for xi in &g {
            assert!(xi.iter().map(|v| v * v).sum::<f64>().sqrt() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn trivial_cf_errors() {
        let m = cauchy();
        let k = build_kernel(&m, 1, 0.1, 0.01, 64, DEFAULT_ZETA_TOL).unwrap();
        let sym = DiffusionSymbol::new(&m, 1).unwrap();
        assert_eq!(cf_sup_error(&k, 7, &sym, 0.7, &[vec![0.0]]).unwrap(), 0.0);
        assert_eq!(cf_sup_error(&k, 0, &sym, 0.0, &xi_grid(1, 10.0, 11).unwrap()).unwrap(), 0.0);
        assert!(cf_sup_error(&k, 1, &sym, 0.01, &[vec![40.0]]).is_err());
    }

    #[test]
    fn benchmark_errors_decrease() {
        let e: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&h| benchmark_error(h)).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        assert!(e[2] < 0.05);
    }

    #[test]
    fn schedule_brackets_time() {
        let m = OrderMeasure::atomic(&[(0.8, 1.0), (1.6, 0.5)]).unwrap();
        for h in [0.4, 0.2, 0.05, 0.013] {
            let (tau, n) = schedule(&m, 2, h, 0.5, 0.5, DEFAULT_ZETA_TOL).unwrap();
            assert!(n as f64 * tau >= 0.5 && (n as f64) * tau < 0.5 + tau);
        }
        assert_eq!(schedule(&m, 1, 0.1, 0.0, 0.5, DEFAULT_ZETA_TOL).unwrap().1, 0);
        assert!(schedule(&m, 1, 0.1, 1.0, 1.5, DEFAULT_ZETA_TOL).is_err());
    }

    #[test]
    fn ks_point_mass_against_symmetric_law() {
        let d = ks_statistic(&[0.0; 10], |x| cauchy_cdf(1.0, x)).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert!(ks_statistic(&[], |x| x).is_err());
    }

    #[test]
    fn ks_exact_sample_is_small() {
        // inverse-CDF draws from the Cauchy law
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 20_000;
        let x: Vec<f64> = (0..m).map(|_| (PI * (rng.gen::<f64>() - 0.5)).tan() * 2.0).collect();
        let d = ks_statistic(&x, |v| cauchy_cdf(2.0, v)).unwrap();
        assert!(d < 1.63 / (m as f64).sqrt(), "{d}");
        assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn empirical_and_exact_cf_agree() {
        let m = cauchy();
        let k = build_kernel(&m, 1, 0.1, 0.05, 64, DEFAULT_ZETA_TOL).unwrap();
        let walkers = 20_000;
        let ens = run_walks(&build_sampler(&k).unwrap(), 10, walkers, 3).unwrap();
        let grid = xi_grid(1, 10.0, 41).unwrap();
        let emp = empirical_cf(&ens, &grid).unwrap();
        for (xi, z) in grid.iter().zip(emp) {
            let exact = k.characteristic_function(xi).powi(10);
            assert!((z.re - exact).abs() + z.im.abs() < 5.0 / (walkers as f64).sqrt());
        }
    }

    #[test]
    fn single_row_study_matches_components() {
        let m = cauchy();
        let opts = StudyOptions { trunc_radius: Some(256), ..StudyOptions::default() };
        let rep = refinement_study(&m, 1, 1.0, &[0.1], 5_000, 9, &opts).unwrap();
        assert_eq!(rep.rows.len(), 1);
        let row = &rep.rows[0];
        let (tau, n) = schedule(&m, 1, 0.1, 1.0, 0.5, DEFAULT_ZETA_TOL).unwrap();
        assert_eq!((row.tau, row.n_steps), (tau, n));
        let k = build_kernel(&m, 1, 0.1, tau, 256, DEFAULT_ZETA_TOL).unwrap();
        let sym = DiffusionSymbol::new(&m, 1).unwrap();
        let cf = cf_sup_error(&k, n, &sym, 1.0, &xi_grid(1, 10.0, 101).unwrap()).unwrap();
        assert_eq!(row.cf_sup_error, cf);
        let ens = run_walks(&build_sampler(&k).unwrap(), n, 5_000, 9).unwrap();
        let ks = ks_distance(&ens, Projection::default(), |x| cauchy_cdf(1.0, x)).unwrap();
        assert_eq!(row.ks_distance, ks);
        assert_eq!(row.ks_radial, None);
        let back = ConvergenceReport::from_json(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
        assert_eq!(rep.to_csv().lines().count(), 2);
    }

    #[test]
    fn study_rejects_unordered_mesh_widths() {
        let m = cauchy();
        let o = StudyOptions::default();
        assert!(refinement_study(&m, 1, 1.0, &[0.1, 0.2], 10, 0, &o).is_err());
        assert!(refinement_study(&m, 1, 1.0, &[0.1, 0.1], 10, 0, &o).is_err());
        assert!(refinement_study(&m, 1, 1.0, &[], 10, 0, &o).is_err());
    }

    #[test]
    fn multiterm_plane_study_is_pre_asymptotic() {
        // At these widths the error of (1 + tau B_h)^n against e^{tB_h} partly
        // cancels the O((h|xi|)^{2-alpha}) error of the lattice symbol; the
        // cancellation fades faster than the symbol converges, so the sup
        // error first grows, peaking near h = 0.1.
        let m = OrderMeasure::atomic(&[(0.8, 1.0), (1.6, 0.5)]).unwrap();
        let rep = refinement_study(&m, 2, 0.5, &[0.4, 0.2], 20_000, 5, &StudyOptions::default()).unwrap();
        let (a, b) = (&rep.rows[0], &rep.rows[1]);
        assert!((a.cf_sup_error - 0.02362).abs() < 1e-4, "{}", a.cf_sup_error);
        assert!((b.cf_sup_error - 0.02951).abs() < 1e-4, "{}", b.cf_sup_error);
        let noise = 1.63 / (20_000f64).sqrt();
        let (ra, rb) = (a.ks_radial.unwrap(), b.ks_radial.unwrap());
        assert!(rb < ra + noise, "radial KS {ra} -> {rb}");
        assert!(b.ks_distance < a.ks_distance + noise, "KS {} -> {}", a.ks_distance, b.ks_distance);
        assert!((rep.xi_max_used - PI / 0.4).abs() < 1e-12);
    }
}

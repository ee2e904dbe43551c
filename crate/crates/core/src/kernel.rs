//! Transition kernel of the lattice walk.
//!
//! The hypersingular representation of the fractional Laplacian is discretized
//! by the rectangular rule on the lattice `hZ^N`, and the explicit Euler step in
//! time turns the resulting scheme into a jump law:
//!
//! ```text
//! p_k = 2 tau Q_k(h) / |k|^N,      Q_k(h) = sum_alpha a(alpha) b(alpha) / (|k| h)^alpha
//! p_0 = 1 - sigma,                 sigma  = 2 tau sum_alpha a(alpha) b(alpha) R(alpha) / h^alpha
//! ```
//!
//! where `b` is the norming constant of the hypersingular integral and `R` is
//! the lattice zeta function `sum_{k != 0} |k|^{-(N+alpha)}`. Only sites with
//! `|k| <= K` are kept; the off-origin mass beyond `K` is put back by scaling
//! the retained off-origin probabilities, so `p_0` and `sigma` stay exact.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{OrderMeasure, OrderTerm};
use crate::special::{gamma, sphere_area, upper_incomplete_gamma};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;

/// Default tolerance for lattice zeta evaluations.
pub const DEFAULT_ZETA_TOL: f64 = 1e-15;

/// Kernels whose discarded tail exceeds this fraction of sigma are flagged.
pub const TAIL_WARNING_FRACTION: f64 = 0.1;

/// Smallest default truncation radius per dimension.
pub const MIN_TRUNC_RADIUS: [usize; 3] = [64, 32, 16];

/// Default physical truncation length `K h` per dimension.
pub const DEFAULT_TRUNC_LENGTH: [f64; 3] = [200.0, 40.0, 8.0];

/// Largest radius the default policy will pick.
pub const MAX_TRUNC_RADIUS: [usize; 3] = [1 << 16, 2048, 160];

/// Default truncation radius at mesh width `h`: the jumps kept cover the
/// physical length `length` (or the per-dimension default), so the discarded
/// tail does not grow as `h` shrinks.
pub fn default_trunc_radius(dim: usize, h: f64, length: Option<f64>) -> usize {
    let d = dim.clamp(1, MAX_DIM) - 1;
    let l = length.unwrap_or(DEFAULT_TRUNC_LENGTH[d]);
    let k = (l / h).ceil();
    let k = if k.is_finite() && k > 0.0 { k as usize } else { 0 };
    k.max(MIN_TRUNC_RADIUS[d]).min(MAX_TRUNC_RADIUS[d])
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Domain(format!("dimension {dim} is outside 1..={MAX_DIM}")))
    }
}

/// Norming constant of the hypersingular representation of the fractional
/// Laplacian of order `alpha` in `dim` dimensions.
pub fn norming_constant(alpha: f64, dim: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("norming constant needs alpha in (0, 2], got {alpha}")));
    }
    if dim == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if alpha == 2.0 {
        return Ok(0.0);
    }
    let n = dim as f64;
    let num = alpha * gamma(alpha / 2.0) * gamma((n + alpha) / 2.0) * (alpha * PI / 2.0).sin();
    let den = 2f64.powf(2.0 - alpha) * PI.powf(1.0 + n / 2.0);
    Ok(num / den)
}

/// Lattice points of `Z^dim` grouped by squared Euclidean norm.
#[derive(Debug, Clone)]
pub struct ShellTable {
    dim: usize,
    radius: usize,
    shells: Vec<(u64, usize, usize)>, // (norm_sq, offset into sites, multiplicity)
    sites: Vec<i64>,
}

impl ShellTable {
    /// Enumerate every `k != 0` with `|k| <= radius` by brute force over the
    /// cube `[-radius, radius]^dim`.
    pub fn enumerate(dim: usize, radius: usize) -> Result<Self> {
        check_dim(dim)?;
        let r = radius as i64;
        let r2 = (radius * radius) as u64;
        let mut groups: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
        let mut k = vec![-r; dim];
        loop {
            let nsq: u64 = k.iter().map(|&c| (c * c) as u64).sum();
            if nsq > 0 && nsq <= r2 {
                groups.entry(nsq).or_default().extend_from_slice(&k);
            }
            // odometer increment
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                if k[axis] < r {
                    k[axis] += 1;
                    break;
                }
                k[axis] = -r;
                if axis == 0 {
                    axis = usize::MAX;
                    break;
                }
            }
            if axis == usize::MAX {
                break;
            }
        }
        let mut shells = Vec::with_capacity(groups.len());
        let mut sites = Vec::new();
        for (nsq, coords) in groups {
            let mult = coords.len() / dim;
            shells.push((nsq, sites.len() / dim, mult));
            sites.extend(coords);
        }
        Ok(Self { dim, radius, shells, sites })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.shells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shells.is_empty()
    }

    /// `(norm_sq, multiplicity)` of every shell, in increasing norm order.
    pub fn shells(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.shells.iter().map(|&(n, _, m)| (n, m))
    }

    /// Partial lattice zeta sum over the enumerated shells.
    pub fn partial_zeta(&self, alpha: f64) -> f64 {
        let s = (self.dim as f64 + alpha) / 2.0;
        // outermost shells first: small terms before large ones
        self.shells
            .iter()
            .rev()
            .map(|&(nsq, _, m)| m as f64 * (nsq as f64).powf(-s))
            .sum()
    }
}

/// Rigorous upper bound on `sum_{|k| > K} |k|^{-(N+alpha)}`.
///
/// In one dimension this is the integral bound `2 K^{-alpha} / alpha`. For
/// `N >= 2` each lattice point is charged to its unit cube, which lies outside
/// the ball of radius `K - sqrt(N)/2`; with `c = sqrt(N)/2` this gives
/// `omega (K / (K - 2c))^{N-1} (K - 2c)^{-alpha} / alpha`, valid for `K > 2c`.
pub fn shell_tail_bound(alpha: f64, dim: usize, radius: usize) -> f64 {
    let k = radius as f64;
    let omega = sphere_area(dim);
    if dim == 1 {
        return omega * k.powf(-alpha) / alpha;
    }
    let c = (dim as f64).sqrt() / 2.0;
    if k <= 2.0 * c {
        return f64::INFINITY;
    }
    omega * (k / (k - 2.0 * c)).powi(dim as i32 - 1) * (k - 2.0 * c).powf(-alpha) / alpha
}

/// Lattice zeta function `R(alpha) = sum_{k in Z^N, k != 0} |k|^{-(N+alpha)}`.
///
/// Evaluated by the theta-function splitting of the Epstein zeta function,
/// whose two lattice sums converge like `exp(-pi |k|^2)`; shells are added
/// until the next one is below `tol`.
pub fn lattice_zeta(alpha: f64, dim: usize, tol: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("lattice zeta needs alpha in (0, 2], got {alpha}")));
    }
    check_dim(dim)?;
    if !(tol > 0.0) {
        return Err(Error::Domain("lattice zeta tolerance must be positive".into()));
    }
    let n = dim as f64;
    let s = n + alpha;
    let half_s = s / 2.0;
    let prefactor = PI.powf(half_s) / gamma(half_s);
    // shell m^2 contributes about count * exp(-pi m^2); count <= (2m+1)^N
    let mut max_nsq = 1u64;
    while {
        let m = (max_nsq as f64).sqrt();
        prefactor * (2.0 * m + 3.0).powf(n) * (-PI * max_nsq as f64).exp() > tol * 1e-3
    } {
        max_nsq += 1;
    }
    let radius = (max_nsq as f64).sqrt().ceil() as usize;
    let table = ShellTable::enumerate(dim, radius)?;
    let mut sum = 0.0;
    for (nsq, mult) in table.shells().collect::<Vec<_>>().into_iter().rev() {
        if nsq > max_nsq {
            continue;
        }
        let x = PI * nsq as f64;
        let direct = x.powf(-half_s) * upper_incomplete_gamma(half_s, x);
        let dual = x.powf(alpha / 2.0) * upper_incomplete_gamma(-alpha / 2.0, x);
        sum += mult as f64 * (direct + dual);
    }
    sum += 2.0 / alpha - 2.0 / s;
    Ok(prefactor * sum)
}

/// `Q_k(h)`: the order-averaged weight of the jump `k`.
pub fn q_coefficient(k: &[i64], measure: &OrderMeasure, h: f64) -> Result<f64> {
    let nsq: i64 = k.iter().map(|c| c * c).sum();
    if nsq == 0 {
        return Err(Error::Domain("q_coefficient is defined for k != 0 only".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Domain("mesh width must be positive".into()));
    }
    let norm = (nsq as f64).sqrt();
    let dim = k.len();
    let mut q = 0.0;
    for term in measure.terms() {
        q += term.weight * norming_constant(term.alpha, dim)? * (norm * h).powf(-term.alpha);
    }
    Ok(q)
}

/// Contribution of one order to sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaContribution {
    pub alpha: f64,
    pub contribution: f64,
}

/// Stability of the explicit scheme: the total off-origin jump probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sigma: f64,
    pub tau_max: f64,
    pub contributions: Vec<AlphaContribution>,
}

/// Per-order constants shared by the kernel builders.
#[derive(Debug, Clone, Copy)]
struct PreparedTerm {
    alpha: f64,
    /// `2 a b h^{-alpha}`, the jump rate per unit tau before the `|k|` factor.
    rate: f64,
    zeta: f64,
}

fn prepare(measure: &OrderMeasure, dim: usize, h: f64, tol: f64) -> Result<Vec<PreparedTerm>> {
    check_dim(dim)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("mesh width must be positive, got {h}")));
    }
    measure
        .terms()
        .map(|t| {
            let b = norming_constant(t.alpha, dim)?;
            Ok(PreparedTerm {
                alpha: t.alpha,
                rate: 2.0 * t.weight * b * h.powf(-t.alpha),
                zeta: lattice_zeta(t.alpha, dim, tol)?,
            })
        })
        .collect()
}

fn stability_from(prepared: &[PreparedTerm], tau: f64) -> StabilityReport {
    let contributions: Vec<AlphaContribution> = prepared
        .iter()
        .map(|p| AlphaContribution { alpha: p.alpha, contribution: tau * p.rate * p.zeta })
        .collect();
    let per_tau: f64 = prepared.iter().map(|p| p.rate * p.zeta).sum();
    let sigma = contributions.iter().map(|c| c.contribution).sum();
    StabilityReport { sigma, tau_max: 1.0 / per_tau, contributions }
}

/// `sigma(tau, h)` and the largest stable time step.
pub fn stability_sigma(
    measure: &OrderMeasure,
    dim: usize,
    h: f64,
    tau: f64,
    tol: f64,
) -> Result<StabilityReport> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("time step must be non-negative, got {tau}")));
    }
    let prepared = prepare(measure, dim, h, tol)?;
    Ok(stability_from(&prepared, tau))
}

/// All sites of one shell share a probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub norm_sq: u64,
    pub multiplicity: usize,
    /// Probability per site before tail renormalization.
    pub raw_prob: f64,
    /// Probability per site after tail renormalization.
    pub prob: f64,
    offset: usize,
}

/// Truncated, renormalized transition law of the walk.
#[derive(Debug, Clone)]
pub struct LatticeKernel {
    dim: usize,
    h: f64,
    tau: f64,
    trunc_radius: usize,
    sigma: f64,
    tau_max: f64,
    p0: f64,
    tail_mass: f64,
    renormalization: f64,
    tail_warning: bool,
    terms: Vec<OrderTerm>,
    shells: Vec<Shell>,
    sites: Vec<i64>,
}

/// Build the transition kernel of the walk for `measure` on `hZ^dim`.
///
/// Fails with [`Error::Stability`] when `sigma(tau, h) > 1`.
pub fn build_kernel(
    measure: &OrderMeasure,
    dim: usize,
    h: f64,
    tau: f64,
    trunc_radius: usize,
    tol: f64,
) -> Result<LatticeKernel> {
    if trunc_radius == 0 {
        return Err(Error::Domain("truncation radius must be at least 1".into()));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("time step must be non-negative, got {tau}")));
    }
    let prepared = prepare(measure, dim, h, tol)?;
    let report = stability_from(&prepared, tau);
    let sigma = report.sigma;
    if sigma > 1.0 + 1e-12 {
        return Err(Error::Stability { sigma, tau_max: report.tau_max });
    }
    // at the stability boundary rounding may push sigma a hair above one
    let off_origin = sigma.min(1.0);
    let table = ShellTable::enumerate(dim, trunc_radius)?;
    let n = dim as f64;

    let mut shells = Vec::with_capacity(table.len());
    let mut retained = 0.0;
    for &(nsq, offset, mult) in table.shells.iter() {
        let norm = (nsq as f64).sqrt();
        let raw: f64 = prepared
            .iter()
            .map(|p| tau * p.rate * norm.powf(-p.alpha))
            .sum::<f64>()
            / norm.powf(n);
        retained += raw * mult as f64;
        shells.push(Shell { norm_sq: nsq, multiplicity: mult, raw_prob: raw, prob: raw, offset });
    }
    let tail_mass: f64 = prepared
        .iter()
        .map(|p| tau * p.rate * (p.zeta - table.partial_zeta(p.alpha)).max(0.0))
        .sum();
    let renormalization = if retained > 0.0 { off_origin / retained } else { 1.0 };
    for s in shells.iter_mut() {
        s.prob = s.raw_prob * renormalization;
    }
    Ok(LatticeKernel {
        dim,
        h,
        tau,
        trunc_radius,
        sigma,
        tau_max: report.tau_max,
        p0: 1.0 - off_origin,
        tail_mass,
        renormalization,
        tail_warning: tail_mass > TAIL_WARNING_FRACTION * sigma,
        terms: measure.terms().copied().collect(),
        shells,
        sites: table.sites,
    })
}

impl LatticeKernel {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn trunc_radius(&self) -> usize {
        self.trunc_radius
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }
    /// Probability of staying put.
    pub fn p0(&self) -> f64 {
        self.p0
    }
    /// Off-origin probability beyond the truncation radius, before renormalization.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }
    /// Factor applied to the retained off-origin probabilities.
    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }
    /// Set when the discarded tail exceeds a tenth of sigma.
    pub fn tail_warning(&self) -> bool {
        self.tail_warning
    }
    pub fn terms(&self) -> &[OrderTerm] {
        &self.terms
    }
    /// Off-origin shells in increasing norm order.
    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    /// Lattice sites of shell `index`, as a flat slice of `dim`-tuples.
    pub fn shell_sites(&self, index: usize) -> &[i64] {
        let s = &self.shells[index];
        &self.sites[s.offset * self.dim..(s.offset + s.multiplicity) * self.dim]
    }

    fn shell_of(&self, k: &[i64]) -> Option<&Shell> {
        let nsq: u64 = k.iter().map(|&c| (c * c) as u64).sum();
        self.shells
            .binary_search_by_key(&nsq, |s| s.norm_sq)
            .ok()
            .map(|i| &self.shells[i])
    }

    /// Transition probability of the jump `k`.
    pub fn prob(&self, k: &[i64]) -> f64 {
        assert_eq!(k.len(), self.dim, "jump has wrong dimension");
        if k.iter().all(|&c| c == 0) {
            return self.p0;
        }
        self.shell_of(k).map_or(0.0, |s| s.prob)
    }

    /// Transition probability of `k` before tail renormalization.
    pub fn raw_prob(&self, k: &[i64]) -> f64 {
        assert_eq!(k.len(), self.dim, "jump has wrong dimension");
        if k.iter().all(|&c| c == 0) {
            return self.p0;
        }
        self.shell_of(k).map_or(0.0, |s| s.raw_prob)
    }

    /// `p_0 + sum_{k != 0} p_k`.
    pub fn total_probability(&self) -> f64 {
        self.p0 + self.shells.iter().map(|s| s.prob * s.multiplicity as f64).sum::<f64>()
    }

    /// Every retained outcome with its probability, origin first.
    pub fn outcomes(&self) -> impl Iterator<Item = (&[i64], f64)> + '_ {
        static ORIGIN: [i64; MAX_DIM] = [0; MAX_DIM];
        let origin = std::iter::once((&ORIGIN[..self.dim], self.p0));
        let rest = self.shells.iter().enumerate().flat_map(move |(i, s)| {
            self.shell_sites(i).chunks_exact(self.dim).map(move |k| (k, s.prob))
        });
        origin.chain(rest)
    }

    /// Exact characteristic function of one jump of the rescaled walk,
    /// `sum_k p_k cos(h k . xi)`; real because the kernel is symmetric.
    pub fn characteristic_function(&self, xi: &[f64]) -> f64 {
        assert_eq!(xi.len(), self.dim, "frequency has wrong dimension");
        // 1 - sum p_k (1 - cos) is exactly 1 at xi = 0
        let mut acc = 0.0;
        for (i, s) in self.shells.iter().enumerate() {
            let mut shell_sum = 0.0;
            for k in self.shell_sites(i).chunks_exact(self.dim) {
                let phase: f64 = k.iter().zip(xi).map(|(&c, &x)| c as f64 * x).sum::<f64>() * self.h;
                let half = (0.5 * phase).sin();
                shell_sum += 2.0 * half * half;
            }
            acc += s.prob * shell_sum;
        }
        1.0 - acc
    }

    pub fn to_document(&self) -> KernelDocument {
        let mut shells = Vec::with_capacity(self.shells.len() + 1);
        shells.push(ShellDocument { norm_sq: 0, prob_per_site: self.p0, multiplicity: 1 });
        shells.extend(self.shells.iter().map(|s| ShellDocument {
            norm_sq: s.norm_sq,
            prob_per_site: s.prob,
            multiplicity: s.multiplicity,
        }));
        KernelDocument {
            dim: self.dim,
            h: self.h,
            tau: self.tau,
            k: self.trunc_radius,
            sigma: self.sigma,
            tau_max: self.tau_max,
            p0: self.p0,
            tail_mass: self.tail_mass,
            tail_warning: self.tail_warning,
            shells,
        }
    }
}

/// JSON form of a kernel. The first shell is the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub dim: usize,
    pub h: f64,
    pub tau: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub sigma: f64,
    pub tau_max: f64,
    pub p0: f64,
    pub tail_mass: f64,
    pub tail_warning: bool,
    pub shells: Vec<ShellDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellDocument {
    pub norm_sq: u64,
    pub prob_per_site: f64,
    pub multiplicity: usize,
}

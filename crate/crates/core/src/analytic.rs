//! The symbol `B(xi) = -sum a |xi|^alpha`, the Green function `G(t, x)` and
//! its closed-form special cases, and a numerical check of the identity
//! `b(alpha) int (2 cos(y . xi) - 2) |y|^{-N-alpha} dy = -|xi|^alpha`.
//!
//! `G` is radial, so it is recovered from the one-dimensional transform
//!
//! ```text
//! G(t, r) = c_N int_0^inf e^{t B(rho)} rho^{N-1} L_N(rho r) d rho
//! ```
//!
//! with `L_1 = cos`, `L_2 = J0`, `L_3(u) = sin(u)/u` and
//! `c_N = omega_{N-1} / (2 pi)^N`.
//!
//! Two routes are provided. [`InversionMethod::Rotated`] turns the integration
//! path into the ray `rho = s e^{i theta}` of the upper half plane, where both
//! the heat factor and `e^{i rho r}` decay exponentially; the plane case uses
//! `J0(u) = (2/pi) int_0^inf sin(u cosh v) dv` to reduce to the same ray
//! integral. [`InversionMethod::RealAxis`] integrates on the real axis panel
//! by panel between the zeros of `L_N`, cut off where `e^{tB} < 1e-17`, with
//! Wynn acceleration of the panel sums.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_dim, norming_constant};
use crate::measure::{OrderMeasure, OrderTerm};
use crate::quad::{adaptive, gauss_kronrod_15, gauss_legendre_20, panel_sum, Estimate};
use crate::special::{one_minus_radial_average, radial_average, radial_average_zero, sphere_area};

/// Floor below which tabulated densities count as negative.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// The Fourier multiplier of the distributed-order operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSymbol {
    dim: usize,
    terms: Vec<OrderTerm>,
}

impl DiffusionSymbol {
    pub fn new(measure: &OrderMeasure, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, terms: measure.terms().copied().collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[OrderTerm] {
        &self.terms
    }

    pub fn alpha_min(&self) -> f64 {
        self.terms.iter().map(|t| t.alpha).fold(f64::INFINITY, f64::min)
    }

    pub fn alpha_max(&self) -> f64 {
        self.terms.iter().map(|t| t.alpha).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `B` at radius `rho = |xi|`.
    pub fn eval_radial(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        -self.terms.iter().map(|t| t.weight * rho.powf(t.alpha)).sum::<f64>()
    }

    /// The single order, if the measure is one atom.
    pub fn single_order(&self) -> Option<OrderTerm> {
        match self.terms.as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }

    /// Frequency `rho*` with `-t B(rho*) = 1`; `1 / rho*` is the length scale
    /// of `G(t, .)`.
    pub fn frequency_scale(&self, t: f64) -> f64 {
        let f = |rho: f64| -t * self.eval_radial(rho) - 1.0;
        let (mut lo, mut hi) = (1.0, 1.0);
        while f(lo) > 0.0 {
            lo *= 0.5;
        }
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-15 {
                break;
            }
        }
        (lo * hi).sqrt()
    }

    /// `(c_j, alpha_j)` with `t nu(r) = sum_j c_j r^{-N-alpha_j}` the jump
    /// density times `t`, which is the leading large-`r` behaviour of `G`.
    pub fn tail_terms(&self, t: f64) -> Vec<(f64, f64)> {
        self.terms
            .iter()
            .map(|term| {
                let b = norming_constant(term.alpha, self.dim).expect("orders validated");
                (2.0 * t * term.weight * b, term.alpha)
            })
            .collect()
    }
}

/// `B(xi)`.
pub fn symbol_eval(sym: &DiffusionSymbol, xi: &[f64]) -> f64 {
    let rho = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    sym.eval_radial(rho)
}

/// `e^{t B(xi)}`.
pub fn green_cf(sym: &DiffusionSymbol, t: f64, xi: &[f64]) -> f64 {
    (t * symbol_eval(sym, xi)).exp()
}

/// `t nu(r)`: leading large-`r` term of `G(t, r)`.
fn tail_density(tail: &[(f64, f64)], dim: usize, r: f64) -> f64 {
    tail.iter().map(|&(c, a)| c * r.powf(-(dim as f64) - a)).sum()
}

/// Mass of `t nu` outside the ball of radius `r`.
fn tail_mass(tail: &[(f64, f64)], dim: usize, r: f64) -> f64 {
    let omega = sphere_area(dim);
    tail.iter().map(|&(c, a)| c * omega * r.powf(-a) / a).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    /// Real axis up to [`AUTO_SWITCH_RADIUS`] length scales, rotated beyond.
    #[default]
    Auto,
    Rotated,
    RealAxis,
}

/// Radius, in units of the length scale of `G`, where `Auto` switches from the
/// real-axis route (fast) to the rotated one (accurate in the far tail).
pub const AUTO_SWITCH_RADIUS: f64 = 1e3;

/// Quadrature controls for the radial inversion and the symbol check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadParams {
    pub method: InversionMethod,
    /// Relative tolerance, measured against `int |integrand|`.
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self { method: InversionMethod::Auto, rel_tol: 1e-10, max_panels: 200_000 }
    }
}

/// Per-evaluation constants of the heat factor on the ray `s e^{i theta}`.
struct Heat {
    dim: usize,
    t: f64,
    terms: Vec<(f64, f64)>,
    rot: Vec<Complex64>,
    theta: f64,
    rho_star: f64,
}

impl Heat {
    fn new(sym: &DiffusionSymbol, t: f64) -> Self {
        // keeps alpha * theta <= pi/4 so the heat factor decays on the ray
        let theta = (PI / (4.0 * sym.alpha_max())).min(0.5 * PI);
        let terms: Vec<(f64, f64)> = sym.terms.iter().map(|x| (x.weight, x.alpha)).collect();
        let rot = terms.iter().map(|&(_, a)| Complex64::from_polar(1.0, a * theta)).collect();
        Self { dim: sym.dim, t, terms, rot, theta, rho_star: sym.frequency_scale(t) }
    }

    /// `t B(s e^{i theta})`.
    #[inline]
    fn exponent(&self, s: f64) -> Complex64 {
        if s == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let ls = s.ln();
        let mut acc = Complex64::new(0.0, 0.0);
        for (&(w, a), r) in self.terms.iter().zip(&self.rot) {
            acc += r * (w * (a * ls).exp());
        }
        -acc * self.t
    }

    /// `t B(rho)` on the real axis.
    #[inline]
    fn exponent_real(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        let l = rho.ln();
        -self.t * self.terms.iter().map(|&(w, a)| w * (a * l).exp()).sum::<f64>()
    }

    /// `int_0^inf E(rho) rho^m e^{i rho x} d rho` along the rotated ray, where
    /// `E = e^{tB}` or, when `minus_one`, `e^{tB} - 1`.
    ///
    /// Returns the value and `(error estimate, int |integrand|)`.
    fn ray(&self, x: f64, m: i32, minus_one: bool) -> (Complex64, f64, f64) {
        let dir = Complex64::from_polar(1.0, self.theta);
        let i_dir = Complex64::i() * dir;
        let (sin_t, cos_t) = self.theta.sin_cos();
        let decay = |s: f64| {
            let heat = if minus_one {
                0.0
            } else {
                -self.exponent(s).re
            };
            heat + s * x * sin_t - m as f64 * (s / self.rho_star).max(1.0).ln()
        };
        let mut big = self.rho_star;
        while decay(big) < 42.0 {
            big *= 2.0;
        }
        while decay(0.5 * big) >= 42.0 {
            big *= 0.5;
        }
        let phase = |s: f64| {
            s * x * cos_t + self.exponent(s).im
        };
        let f = |s: f64| -> Complex64 {
            let e = self.exponent(s);
            let amp = if minus_one {
                // e^{w} - 1 without cancellation for small |w|
                let (sb, cb) = e.im.sin_cos();
                let half = (0.5 * e.im).sin();
                Complex64::new(e.re.exp_m1() * cb - 2.0 * half * half, e.re.exp() * sb)
            } else {
                e.exp()
            };
            let osc = if x == 0.0 { Complex64::new(1.0, 0.0) } else { (i_dir * (s * x)).exp() };
            amp * osc * s.powi(m)
        };
        let inner = 1e-6 * big.min(self.rho_star);
        let mut value = gauss_legendre_20().integrate_graded(f, 0.0, inner, 12);
        let mut scale = value.norm();
        let mut error = 0.0;
        let mut hi = big;
        while hi > inner {
            let lo = (0.5 * hi).max(inner);
            let spread = (phase(hi) - phase(lo)).abs() + (decay(hi) - decay(lo)).abs();
            let nsub = (spread / 1.5).ceil().max(1.0) as usize;
            let w = (hi - lo) / nsub as f64;
            for j in 0..nsub {
                let a = lo + w * j as f64;
                let mut g = f;
                let (v, e) = gauss_kronrod_15(&mut g, a, a + w);
                value += v;
                error += e;
                // subpanels span under a quarter turn, so |v| tracks int |f|
                scale += v.norm();
            }
            hi = lo;
        }
        let rot = Complex64::from_polar(1.0, (m + 1) as f64 * self.theta);
        (value * rot, error, scale)
    }

    fn eval(&self, r: f64, params: &QuadParams) -> Result<(f64, f64)> {
        match params.method {
            InversionMethod::Rotated => self.rotated(r, params),
            InversionMethod::RealAxis => self.real_axis(r, params),
            InversionMethod::Auto => {
                if r * self.rho_star <= AUTO_SWITCH_RADIUS {
                    self.real_axis(r, params)
                } else {
                    self.rotated(r, params)
                }
            }
        }
    }

    fn check(&self, value: f64, error: f64, scale: f64, rel_tol: f64) -> Result<f64> {
        if error > rel_tol * scale.max(f64::MIN_POSITIVE) && error > 1e-300 {
            Err(Error::Quadrature { estimate: value, error })
        } else {
            Ok(value)
        }
    }

    fn rotated(&self, r: f64, params: &QuadParams) -> Result<(f64, f64)> {
        let ell = 1.0 / self.rho_star;
        let sub = r > ell;
        match self.dim {
            1 => {
                let (v, e, s) = self.ray(r, 0, sub);
                let val = v.re / PI;
                Ok((self.check(val, e / PI, s / PI, params.rel_tol)?, e / PI))
            }
            3 => {
                if r == 0.0 {
                    let (v, e, s) = self.ray(0.0, 2, false);
                    let c = 1.0 / (2.0 * PI * PI);
                    Ok((self.check(v.re * c, e * c, s * c, params.rel_tol)?, e * c))
                } else {
                    let (v, e, s) = self.ray(r, 1, sub);
                    let c = 1.0 / (2.0 * PI * PI * r);
                    Ok((self.check(v.im * c, e * c, s * c, params.rel_tol)?, e * c))
                }
            }
            2 => {
                if r == 0.0 {
                    let (v, e, s) = self.ray(0.0, 1, false);
                    let c = 1.0 / (2.0 * PI);
                    return Ok((self.check(v.re * c, e * c, s * c, params.rel_tol)?, e * c));
                }
                self.abel(r, params)
            }
            _ => unreachable!("dimension checked on construction"),
        }
    }

    /// `F(x) = int e^{tB} rho sin(rho x) d rho`, with error and scale.
    fn abel_kernel(&self, x: f64) -> (f64, f64, f64) {
        let (f, e, s) = self.ray(x, 1, x * self.rho_star > 1.0);
        (f.im, e, s)
    }

    /// Plane density from `F`: `G(r) = pi^{-2} int_0^inf F(r cosh v) dv`.
    fn abel(&self, r: f64, params: &QuadParams) -> Result<(f64, f64)> {
        self.abel_with(r, params, |x| self.abel_kernel(x))
    }

    fn abel_with(&self, r: f64, params: &QuadParams, f: impl Fn(f64) -> (f64, f64, f64)) -> Result<(f64, f64)> {
        let ell = 1.0 / self.rho_star;
        let rule = gauss_legendre_20();
        let mut total = 0.0;
        let mut error = 0.0;
        let mut scale = 0.0;
        let mut quiet = 0;
        let width = 1.0;
        for k in 0.. {
            let a = k as f64 * width;
            let mut panel = 0.0;
            for (xn, wn) in rule.nodes().iter().zip(rule.weights()) {
                let v = a + 0.5 * width * (1.0 + xn);
                let (fv, e, s) = f(r * v.cosh());
                let w = 0.5 * width * wn;
                panel += w * fv;
                error += w * e;
                scale += w * s;
            }
            total += panel;
            let far = r * a.cosh() > 10.0 * ell;
            if far && panel.abs() <= 1e-15 * total.abs().max(f64::MIN_POSITIVE) {
                quiet += 1;
                if quiet >= 2 {
                    break;
                }
            } else {
                quiet = 0;
            }
            if k > 4000 {
                return Err(Error::Quadrature { estimate: total / (PI * PI), error: panel.abs() });
            }
        }
        let c = 1.0 / (PI * PI);
        Ok((self.check(total * c, error * c, scale * c, params.rel_tol)?, error * c))
    }

    /// `ln F` tabulated on a uniform grid in `ln x` over `[x_lo, x_hi]`, for
    /// plane densities far out in the tail where `F > 0` varies slowly in
    /// `ln x`. `None` if `F` is not positive at some node.
    fn abel_table(&self, x_lo: f64, x_hi: f64) -> Option<AbelTable> {
        let step = std::f64::consts::LN_10 / ABEL_TABLE_PER_DECADE;
        let s0 = x_lo.ln() - 2.0 * step;
        let n = ((x_hi.ln() - s0) / step).ceil() as usize + 3;
        let rows: Vec<(f64, f64, f64)> = (0..n).into_par_iter().map(|i| self.abel_kernel((s0 + step * i as f64).exp())).collect();
        if rows.iter().any(|r| !(r.0 > 0.0)) {
            return None;
        }
        Some(AbelTable {
            s0,
            step,
            log_f: rows.iter().map(|r| r.0.ln()).collect(),
            rel_err: rows.iter().map(|r| r.1 / r.0).fold(0.0, f64::max),
        })
    }

    fn real_axis(&self, r: f64, params: &QuadParams) -> Result<(f64, f64)> {
        let dim = self.dim;
        let c = sphere_area(dim) / (2.0 * PI).powi(dim as i32);
        // e^{tB(P)} <= 1e-17
        let mut cut = self.rho_star;
        while -self.exponent_real(cut) < 39.0 {
            cut *= 2.0;
        }
        let f = |rho: f64| self.exponent_real(rho).exp() * rho.powi(dim as i32 - 1) * radial_average(dim, rho * r);
        let tol = params.rel_tol;
        let abs_floor = 1e-16 * self.rho_star.powi(dim as i32);
        let panel = |a: f64, b: f64| -> f64 {
            match adaptive(f, a, b, abs_floor * 1e-3, tol * 1e-2, 400) {
                Ok(est) => est.value,
                Err(Error::Quadrature { estimate, .. }) => estimate,
                Err(_) => f64::NAN,
            }
        };
        let est: Estimate<f64> = if r == 0.0 {
            // geometric breakpoints toward the cusp at 0
            let mut value = 0.0;
            let mut error = 0.0;
            let mut hi = cut;
            let lo_end = 1e-8 * self.rho_star;
            while hi > lo_end {
                let lo = 0.5 * hi;
                let e = adaptive(f, lo, hi, abs_floor * 1e-3, tol * 1e-2, 400)?;
                value += e.value;
                error += e.error;
                hi = lo;
            }
            value += gauss_legendre_20().integrate_graded(f, 0.0, hi, 8);
            Estimate { value, error, evaluations: 0 }
        } else {
            let zeros = (1..).map(move |k| radial_average_zero(dim, k) / r);
            panel_sum(panel, 0.0, zeros, cut, tol, 0.0, params.max_panels)?
        };
        if !est.value.is_finite() {
            return Err(Error::Quadrature { estimate: est.value, error: f64::INFINITY });
        }
        Ok((c * est.value, c * est.error))
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Nodes per decade of the tail table for plane densities.
const ABEL_TABLE_PER_DECADE: f64 = 64.0;

struct AbelTable {
    s0: f64,
    step: f64,
    log_f: Vec<f64>,
    rel_err: f64,
}

impl AbelTable {
    /// Four-point Lagrange interpolation of `ln F` in `ln x`.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let u = (x.ln() - self.s0) / self.step;
        let n = self.log_f.len();
        let i = (u.floor() as isize).clamp(1, n as isize - 3) as usize;
        let p = u - i as f64;
        let y = &self.log_f[i - 1..i + 3];
        let l = -p * (p - 1.0) * (p - 2.0) / 6.0 * y[0] + (p + 1.0) * (p - 1.0) * (p - 2.0) / 2.0 * y[1]
            - (p + 1.0) * p * (p - 2.0) / 2.0 * y[2]
            + (p + 1.0) * p * (p - 1.0) / 6.0 * y[3];
        let f = l.exp();
        (f, f * self.rel_err, f)
    }
}

/// `G(t, r)` at a single radius.
pub fn green_value(sym: &DiffusionSymbol, t: f64, r: f64, params: &QuadParams) -> Result<f64> {
    check_time(t)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be non-negative, got {r}")));
    }
    Ok(Heat::new(sym, t).eval(r, params)?.0)
}

/// Radial nodes for [`green_density`].
#[derive(Debug, Clone, PartialEq, Default)]
pub enum RadialGrid {
    /// Origin plus 511 geometric nodes from `1e-3 l` to `r_max`, where `l` is
    /// the length scale of `G(t, .)` and `r_max` is large enough that the
    /// mass outside is below `1e-6` (but at least `50 l`, at most `1e9 l`).
    #[default]
    Default,
    /// Origin plus `nodes - 1` geometric nodes on `[r_min, r_max]`.
    Geometric { r_min: f64, r_max: f64, nodes: usize },
    /// Explicit increasing nodes starting at 0.
    Explicit(Vec<f64>),
}

pub const DEFAULT_GRID_NODES: usize = 512;

fn geometric(r_min: f64, r_max: f64, nodes: usize) -> Vec<f64> {
    let mut r = Vec::with_capacity(nodes);
    r.push(0.0);
    let n = nodes - 1;
    let ratio = (r_max / r_min).ln() / (n - 1).max(1) as f64;
    for i in 0..n {
        r.push(r_min * (ratio * i as f64).exp());
    }
    if n > 1 {
        r[n] = r_max;
    }
    r
}

fn resolve_grid(sym: &DiffusionSymbol, t: f64, grid: &RadialGrid) -> Result<Vec<f64>> {
    let r = match grid {
        RadialGrid::Default => {
            let ell = 1.0 / sym.frequency_scale(t);
            let tail = sym.tail_terms(t);
            let mut r_max = 50.0 * ell;
            while tail_mass(&tail, sym.dim, r_max) > 1e-6 && r_max < 1e9 * ell {
                r_max *= 2.0;
            }
            geometric(1e-3 * ell, r_max.min(1e9 * ell), DEFAULT_GRID_NODES)
        }
        RadialGrid::Geometric { r_min, r_max, nodes } => {
            if !(*r_min > 0.0 && r_max > r_min && *nodes >= 3) {
                return Err(Error::Invalid("geometric grid needs 0 < r_min < r_max and at least 3 nodes".into()));
            }
            geometric(*r_min, *r_max, *nodes)
        }
        RadialGrid::Explicit(r) => r.clone(),
    };
    if r.len() < 3 || r[0] != 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("radial grid must start at 0, increase strictly and have 3+ nodes".into()));
    }
    Ok(r)
}

/// Tabulated `G(t, .)` on a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDensity {
    dim: usize,
    t: f64,
    terms: Vec<OrderTerm>,
    params: QuadParams,
    r: Vec<f64>,
    g: Vec<f64>,
    /// Tangents of the log-log cubic, per node.
    slopes: Vec<f64>,
    tail: Vec<(f64, f64)>,
    /// `g_last / (t nu(r_last))`, used to continue past the grid.
    tail_ratio: f64,
    max_error: f64,
    /// Interpolant mass inside each node.
    cumulative: Vec<f64>,
}

/// `G(t, .)` on `grid`.
pub fn green_density(sym: &DiffusionSymbol, t: f64, grid: &RadialGrid, params: &QuadParams) -> Result<RadialDensity> {
    check_time(t)?;
    let r = resolve_grid(sym, t, grid)?;
    let heat = Heat::new(sym, t);
    let switch = AUTO_SWITCH_RADIUS / heat.rho_star;
    let last = *r.last().expect("nonempty grid");
    // plane tail nodes share one table of F instead of one Abel sum each
    let table = if sym.dim == 2 && params.method == InversionMethod::Auto && last > switch {
        let first = r.iter().copied().find(|&x| x > switch).unwrap_or(last);
        // F(r cosh v) is summed until it drops by 1e-15, F ~ x^{-2-alpha}
        let reach = (36.0 / (2.0 + sym.alpha_min())).cosh();
        heat.abel_table(first, last * reach)
    } else {
        None
    };
    let values: Vec<Result<(f64, f64)>> = r
        .par_iter()
        .map(|&ri| match &table {
            Some(tab) if ri > switch => heat.abel_with(ri, params, |x| tab.eval(x)),
            _ => heat.eval(ri, params),
        })
        .collect();
    let mut g = Vec::with_capacity(r.len());
    let mut max_error: f64 = 0.0;
    for v in values {
        let (val, err) = v?;
        g.push(val);
        max_error = max_error.max(err);
    }
    let tail = sym.tail_terms(t);
    let nu_last = tail_density(&tail, sym.dim, last);
    let tail_ratio = if nu_last > 0.0 && g[g.len() - 1] > 0.0 { g[g.len() - 1] / nu_last } else { 1.0 };
    let slopes = log_log_slopes(&r, &g);
    let mut density = RadialDensity {
        dim: sym.dim,
        t,
        terms: sym.terms.clone(),
        params: *params,
        r,
        g,
        slopes,
        tail,
        tail_ratio,
        max_error,
        cumulative: Vec::new(),
    };
    let mut acc = 0.0;
    density.cumulative.push(0.0);
    for k in 0..density.r.len() - 1 {
        acc += density.piece(k, density.r[k + 1]);
        density.cumulative.push(acc);
    }
    Ok(density)
}

/// Fritsch-Carlson tangents of `ln g` against `ln r` on nodes `1..`.
fn log_log_slopes(r: &[f64], g: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let x: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = g.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let d: Vec<f64> = (1..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    // d[k] is the secant on [k+1, k+2]
    m[1] = d[0];
    m[n - 1] = d[d.len() - 1];
    for i in 2..n - 1 {
        let (a, b) = (d[i - 2], d[i - 1]);
        m[i] = if a * b <= 0.0 { 0.0 } else { 0.5 * (a + b) };
    }
    for k in 0..d.len() {
        let (i, j) = (k + 1, k + 2);
        if d[k] == 0.0 {
            m[i] = 0.0;
            m[j] = 0.0;
            continue;
        }
        let a = m[i] / d[k];
        let b = m[j] / d[k];
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * d[k];
            m[j] = tau * b * d[k];
        }
    }
    m
}

impl RadialDensity {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn radii(&self) -> &[f64] {
        &self.r
    }
    pub fn values(&self) -> &[f64] {
        &self.g
    }
    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }
    /// Largest quadrature error estimate over the grid.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    /// Smallest tabulated value.
    pub fn min_value(&self) -> f64 {
        self.g.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.min_value() >= -POSITIVITY_FLOOR
    }

    /// Interpolated `G(t, r)`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let n = self.r.len();
        if r >= self.r[n - 1] {
            return self.tail_ratio * tail_density(&self.tail, self.dim, r);
        }
        let i = self.r.partition_point(|&x| x <= r) - 1;
        let (r0, r1) = (self.r[i], self.r[i + 1]);
        let (g0, g1) = (self.g[i], self.g[i + 1]);
        if i == 0 || g0 <= 0.0 || g1 <= 0.0 {
            return g0 + (g1 - g0) * (r - r0) / (r1 - r0);
        }
        let (x0, x1) = (r0.ln(), r1.ln());
        let hx = x1 - x0;
        let s = (r.ln() - x0) / hx;
        let (y0, y1) = (g0.ln(), g1.ln());
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        (h00 * y0 + h10 * hx * self.slopes[i] + h01 * y1 + h11 * hx * self.slopes[i + 1]).exp()
    }

    /// `int_{|x| < R} G` using the interpolant, extended past the grid by
    /// the jump-density tail.
    pub fn cdf_radial(&self, big_r: f64) -> f64 {
        if big_r <= 0.0 {
            return 0.0;
        }
        let n = self.r.len();
        let last = self.r[n - 1];
        if big_r >= last {
            let tail = self.tail_ratio * (tail_mass(&self.tail, self.dim, last) - tail_mass(&self.tail, self.dim, big_r));
            return self.cumulative[n - 1] + tail;
        }
        // nodes r[i] <= big_r < r[i + 1]
        let i = self.r.partition_point(|&x| x <= big_r) - 1;
        self.cumulative[i] + self.piece(i, big_r)
    }

    /// `omega int_{r_i}^{b} G r^{N-1} dr` for `b` inside panel `i`.
    fn piece(&self, i: usize, b: f64) -> f64 {
        let a = self.r[i];
        if b <= a {
            return 0.0;
        }
        let rule = gauss_legendre_20();
        let v = if i == 0 {
            rule.integrate(|x: f64| self.eval(x) * x.powi(self.dim as i32 - 1), a, b)
        } else {
            rule.integrate(
                |u: f64| {
                    let x = u.exp();
                    self.eval(x) * x.powi(self.dim as i32)
                },
                a.ln(),
                b.ln(),
            )
        };
        sphere_area(self.dim) * v
    }

    pub fn mass(&self) -> f64 {
        let last = self.r_max();
        self.cdf_radial(last) + self.tail_ratio * tail_mass(&self.tail, self.dim, last)
    }

    /// CDF on the line; one-dimensional densities only.
    pub fn cdf(&self, x: f64) -> f64 {
        assert_eq!(self.dim, 1, "cdf is defined for one-dimensional densities");
        let half = 0.5 * self.cdf_radial(x.abs());
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    /// Radial Fourier transform of the interpolant at `|xi| = xi`.
    ///
    /// Computed as `1 - int G (1 - L_N(r xi))` so the far field contributes
    /// through its mass; the oscillating remainder beyond the cut is dropped.
    pub fn forward_transform(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        if xi == 0.0 {
            return self.mass();
        }
        let dim = self.dim;
        let omega = sphere_area(dim);
        let rule = gauss_legendre_20();
        let cut = self.r_max().min(2e4 / xi);
        let mut acc = 0.0;
        let f = |x: f64| self.eval(x) * x.powi(dim as i32 - 1) * one_minus_radial_average(dim, x * xi);
        for i in 0..self.r.len() - 1 {
            let a = self.r[i];
            if a >= cut {
                break;
            }
            let b = self.r[i + 1].min(cut);
            let nsub = ((b - a) * xi / 2.0).ceil().max(1.0) as usize;
            let w = (b - a) / nsub as f64;
            for j in 0..nsub {
                let lo = a + w * j as f64;
                acc += rule.integrate(f, lo, lo + w);
            }
        }
        let outside = self.mass() - self.cdf_radial(cut);
        self.mass() - omega * acc - outside
    }

    /// `r,G` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,G\n");
        for (r, g) in self.r.iter().zip(&self.g) {
            let _ = writeln!(out, "{r:e},{g:e}");
        }
        out
    }

    pub fn to_document(&self) -> RadialDensityDocument {
        RadialDensityDocument {
            dim: self.dim,
            t: self.t,
            measure: self.terms.clone(),
            quadrature: QuadDiagnostics {
                params: self.params,
                max_error_estimate: self.max_error,
                min_value: self.min_value(),
                mass: self.mass(),
            },
            interpolation: "monotone cubic in log-log; linear on the first interval; jump-density tail past r_max".into(),
            r: self.r.clone(),
            g: self.g.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadDiagnostics {
    pub params: QuadParams,
    pub max_error_estimate: f64,
    pub min_value: f64,
    pub mass: f64,
}

/// JSON form of a tabulated density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDensityDocument {
    pub dim: usize,
    pub t: f64,
    pub measure: Vec<OrderTerm>,
    pub quadrature: QuadDiagnostics,
    pub interpolation: String,
    pub r: Vec<f64>,
    pub g: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Heat kernel `(4 pi t)^{-N/2} exp(-|x|^2 / (4t))`, the density for the
/// ordinary Laplacian.
pub fn gaussian_density(t: f64, x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let r = norm(x);
    (4.0 * PI * t).powf(-n / 2.0) * (-r * r / (4.0 * t)).exp()
}

/// Cauchy-Poisson density `Gamma((N+1)/2) pi^{-(N+1)/2} t / (|x|^2 + t^2)^{(N+1)/2}`.
pub fn cauchy_density(t: f64, x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let r = norm(x);
    let p = 0.5 * (n + 1.0);
    crate::special::gamma(p) * PI.powf(-p) * t / (r * r + t * t).powf(p)
}

/// Cauchy CDF with scale `t` on the line.
pub fn cauchy_cdf(t: f64, x: f64) -> f64 {
    0.5 + (x / t).atan() / PI
}

/// `b(alpha) int_{R^N} (2 cos(y . xi) - 2) |y|^{-N-alpha} dy` for `|xi| = xi`,
/// integrated in polar form; the result should equal `-|xi|^alpha`.
pub fn symbol_oracle(alpha: f64, dim: usize, xi: f64, params: &QuadParams) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("symbol check needs alpha in (0, 2), got {alpha}")));
    }
    check_dim(dim)?;
    let s = xi.abs();
    if s == 0.0 {
        return Ok(0.0);
    }
    let b = norming_constant(alpha, dim)?;
    let omega = sphere_area(dim);
    // radial integral int_0^inf (L(r s) - 1) r^{-1-alpha} dr, split at the
    // first zero of L beyond r s = 4
    let z1 = (1..).map(|k| radial_average_zero(dim, k)).find(|&z| z > 4.0).unwrap();
    let split = z1 / s;
    let near = |r: f64| -one_minus_radial_average(dim, r * s) * r.powf(-1.0 - alpha);
    let head = gauss_legendre_20().integrate_graded(near, 0.0, split, 40);
    let far = |r: f64| radial_average(dim, r * s) * r.powf(-1.0 - alpha);
    let panel = |a: f64, b: f64| gauss_legendre_20().integrate(far, a, b);
    let zeros = (1..).map(move |k| radial_average_zero(dim, k) / s);
    let tail = panel_sum(panel, split, zeros, f64::INFINITY, params.rel_tol * 1e-2, 0.0, params.max_panels)?;
    let radial = head + tail.value - split.powf(-alpha) / alpha;
    Ok(2.0 * omega * b * radial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(alpha: f64, dim: usize) -> DiffusionSymbol {
        DiffusionSymbol::new(&OrderMeasure::single(alpha, 1.0).unwrap(), dim).unwrap()
    }

    fn mixed(dim: usize) -> DiffusionSymbol {
        use crate::measure::{discretize_density, DensityFamily};
        let nodes = discretize_density(&DensityFamily::Constant { value: 1.0 }, 0.5, 1.5, 32, 4).unwrap();
        let m = OrderMeasure::new(
            vec![OrderTerm::new(0.8, 1.0), OrderTerm::new(1.6, 0.5)],
            nodes,
        )
        .unwrap();
        DiffusionSymbol::new(&m, dim).unwrap()
    }

    #[test]
    fn symbol_values() {
        let s = single(1.0, 1);
        assert_eq!(symbol_eval(&s, &[0.0]), 0.0);
        assert_eq!(symbol_eval(&s, &[1.0]), -1.0);
        let two = DiffusionSymbol::new(&OrderMeasure::atomic(&[(0.5, 1.0), (1.5, 2.0)]).unwrap(), 1).unwrap();
        assert_relative_eq!(symbol_eval(&two, &[2.0]), -7.071_067_811_865_475, max_relative = 1e-14);
        let s3 = single(0.7, 3);
        assert_eq!(symbol_eval(&s3, &[0.6, 0.0, 0.8]), symbol_eval(&s3, &[0.0, 1.0, 0.0]));
    }

    #[test]
    fn cf_values() {
        let s = single(1.0, 1);
        assert_eq!(green_cf(&s, 0.0, &[3.0]), 1.0);
        assert_relative_eq!(green_cf(&s, 1.0, &[1.0]), (-1.0f64).exp(), max_relative = 1e-15);
        let m = mixed(2);
        let xi = [0.3, -1.1];
        assert_relative_eq!(
            green_cf(&m, 0.7, &xi),
            green_cf(&m, 0.3, &xi) * green_cf(&m, 0.4, &xi),
            max_relative = 1e-14
        );
    }

    #[test]
    fn closed_forms() {
        assert_relative_eq!(gaussian_density(1.0, &[0.0]), 0.282_094_791_773_878_1, max_relative = 1e-15);
        assert_eq!(gaussian_density(0.7, &[1.3]), gaussian_density(0.7, &[-1.3]));
        assert_relative_eq!(cauchy_density(1.0, &[0.0]), 1.0 / PI, max_relative = 1e-15);
        assert_relative_eq!(cauchy_density(2.0, &[0.0]), 0.5 / PI, max_relative = 1e-15);
        assert_relative_eq!(cauchy_density(1.0, &[1.0]), 0.5 / PI, max_relative = 1e-15);
        assert_relative_eq!(cauchy_density(1.0, &[0.0, 0.0]), 0.5 / PI, max_relative = 1e-15);
        // integrals by adaptive quadrature
        let g = adaptive(|x: f64| gaussian_density(0.5, &[x]), -30.0, 30.0, 1e-14, 1e-14, 1000).unwrap();
        assert!((g.value - 1.0).abs() < 1e-10);
        let c = adaptive(|u: f64| {
            let x = u.tan();
            cauchy_density(1.0, &[x]) / u.cos().powi(2)
        }, -0.5 * PI + 1e-12, 0.5 * PI - 1e-12, 1e-14, 1e-14, 1000)
        .unwrap();
        assert!((c.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cauchy_matches_inverse_transform_at_origin() {
        // (1/2pi) int e^{-t|xi|} d xi = 1/(pi t)
        for t in [1.0, 2.0] {
            let inv = adaptive(|x: f64| (-t * x).exp() / PI, 0.0, 80.0, 1e-15, 1e-15, 1000).unwrap();
            assert_relative_eq!(inv.value, cauchy_density(t, &[0.0]), max_relative = 1e-12);
        }
    }

    #[test]
    fn oracle_identity_small_matrix() {
        let p = QuadParams::default();
        assert_eq!(symbol_oracle(1.0, 1, 0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(symbol_oracle(1.0, 1, 1.0, &p).unwrap(), -1.0, max_relative = 1e-8);
        assert_relative_eq!(symbol_oracle(1.0, 1, 2.0, &p).unwrap(), -2.0, max_relative = 1e-8);
        assert_relative_eq!(symbol_oracle(0.5, 2, 1.0, &p).unwrap(), -1.0, max_relative = 1e-7);
        assert_relative_eq!(symbol_oracle(1.5, 3, 2.0, &p).unwrap(), -(2f64.powf(1.5)), max_relative = 1e-7);
    }

    #[test]
    fn green_matches_references_one_dimension() {
        // 30-digit contour quadrature
        let p = QuadParams::default();
        let real = QuadParams { method: InversionMethod::RealAxis, ..p };
        let cases = [
            (0.7, 0.5, [1.084_591_344_899_112_1, 0.089_579_282_759_780_241, 0.017_019_432_838_916_695]),
            (1.3, 2.0, [0.172_489_065_902_328_64, 0.146_699_487_169_151_34, 0.055_986_549_092_558_844]),
        ];
        for (alpha, t, want) in cases {
            let s = single(alpha, 1);
            for (r, w) in [0.0, 1.0, 3.0].into_iter().zip(want) {
                let a = green_value(&s, t, r, &p).unwrap();
                let b = green_value(&s, t, r, &real).unwrap();
                assert_relative_eq!(a, w, max_relative = 1e-9);
                assert_relative_eq!(b, w, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn green_mixed_reference() {
        let m = mixed(1);
        let p = QuadParams::default();
        let want = [
            (0.0, 0.123_964_298_113_984_5),
            (0.5, 0.119_473_376_783_423_21),
            (2.0, 0.075_628_772_695_459_076),
            (10.0, 0.007_212_858_998_455_121),
        ];
        for (r, w) in want {
            assert_relative_eq!(green_value(&m, 1.0, r, &p).unwrap(), w, max_relative = 1e-9);
        }
    }

    #[test]
    fn green_cauchy_all_dimensions() {
        let p = QuadParams::default();
        for dim in 1..=3 {
            let s = single(1.0, dim);
            for r in [0.0, 0.3, 1.0, 4.0, 10.0, 1e3, 3e4] {
                let x: Vec<f64> = std::iter::once(r).chain(std::iter::repeat(0.0)).take(dim).collect();
                let want = cauchy_density(1.0, &x);
                let got = green_value(&s, 1.0, r, &p).unwrap();
                assert_relative_eq!(got, want, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn real_axis_agrees_in_plane_and_space() {
        let p = QuadParams { method: InversionMethod::Rotated, ..QuadParams::default() };
        let real = QuadParams { method: InversionMethod::RealAxis, ..p };
        for dim in [2, 3] {
            let s = single(1.3, dim);
            for r in [0.0, 0.5, 2.0] {
                let a = green_value(&s, 1.0, r, &p).unwrap();
                let b = green_value(&s, 1.0, r, &real).unwrap();
                assert!((a - b).abs() < 1e-9 * a.abs().max(1e-3), "dim {dim} r {r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn tabulated_density_mass_and_transform() {
        let s = single(1.0, 1);
        let d = green_density(&s, 1.0, &RadialGrid::Default, &QuadParams::default()).unwrap();
        assert!(d.is_positive());
        assert!((d.mass() - 1.0).abs() < 1e-4, "mass {}", d.mass());
        for x in [0.0, 0.37, 2.2, 9.0, 150.0] {
            assert_relative_eq!(d.eval(x), cauchy_density(1.0, &[x]), max_relative = 1e-6);
            assert!((d.cdf(x) - cauchy_cdf(1.0, x)).abs() < 1e-5);
        }
        for xi in [0.5, 1.0, 5.0] {
            assert!((d.forward_transform(xi) - (-xi).exp()).abs() < 1e-4, "xi {xi}");
        }
    }

    #[test]
    fn plane_tail_table_matches_direct_sum() {
        let m = OrderMeasure::atomic(&[(0.8, 1.0), (1.6, 0.5)]).unwrap();
        let s = DiffusionSymbol::new(&m, 2).unwrap();
        let p = QuadParams::default();
        let grid = RadialGrid::Explicit(vec![0.0, 1.0, 2e3, 5e4, 3e6]);
        let d = green_density(&s, 0.5, &grid, &p).unwrap();
        for (&r, &g) in d.radii().iter().zip(d.values()).skip(2) {
            assert_relative_eq!(g, green_value(&s, 0.5, r, &p).unwrap(), max_relative = 1e-9);
        }
    }
}

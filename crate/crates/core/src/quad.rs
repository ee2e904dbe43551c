//! Quadrature building blocks: fixed Gauss-Legendre rules, adaptive
//! Gauss-Kronrod, and panel summation with Wynn's epsilon acceleration for
//! oscillatory tails.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values a quadrature rule can accumulate.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(&self, mut f: F, a: f64, b: f64) -> T {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * *w;
        }
        acc * half
    }

    /// Integrate over `[a, b]` with panels refined geometrically toward `a`,
    /// for integrands with an algebraic singularity or cusp at `a`.
    ///
    /// The panels are `[a + d q^{j+1}, a + d q^j]` for `j < levels`, plus the
    /// innermost `[a, a + d q^levels]`, with `d = b - a` and `q = 1/4`.
    pub fn integrate_graded<T: QuadValue, F: FnMut(f64) -> T>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        levels: usize,
    ) -> T {
        let d = b - a;
        let mut acc = T::zero();
        let mut hi = 1.0;
        for _ in 0..levels {
            let lo = hi * 0.25;
            acc = acc + self.integrate(&mut f, a + d * lo, a + d * hi);
            hi = lo;
        }
        acc + self.integrate(&mut f, a, a + d * hi)
    }
}

/// Shared 20-point rule used by the hot loops.
pub fn gauss_legendre_20() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(20))
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod 7/15 panel: (Kronrod estimate, |Kronrod - Gauss|).
pub fn gauss_kronrod_15<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod = kronrod + s * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let k = kronrod * half;
    let g = gauss * half;
    (k, (k - g).magnitude())
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss-Kronrod 7/15 integration over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol |I|)`.
pub fn adaptive<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<Estimate<T>> {
    let (value, error) = gauss_kronrod_15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut evaluations = 15;
    loop {
        if total_err <= abs_tol.max(rel_tol * total.magnitude()) {
            break;
        }
        if heap.len() >= max_segments {
            return Err(Error::Quadrature {
                estimate: total.magnitude(),
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted in floating point
            heap.push(worst);
            return Err(Error::Quadrature {
                estimate: total.magnitude(),
                error: total_err,
            });
        }
        let (v1, e1) = gauss_kronrod_15(&mut f, worst.a, mid);
        let (v2, e2) = gauss_kronrod_15(&mut f, mid, worst.b);
        evaluations += 30;
        total = total - worst.value + v1 + v2;
        total_err = total_err - worst.error + e1 + e2;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // re-sum to shed accumulated cancellation in the running totals
    let mut value = T::zero();
    let mut error = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        error += s.error;
    }
    Ok(Estimate { value, error, evaluations })
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums.
///
/// Returns the extrapolated limit taken from the highest even column of the
/// epsilon table.
pub fn wynn_epsilon(partial_sums: &[f64]) -> f64 {
    let n = partial_sums.len();
    if n < 3 {
        return *partial_sums.last().unwrap_or(&0.0);
    }
    // e[k] holds column k of the table for the current diagonal sweep
    let mut prev: Vec<f64> = partial_sums.to_vec(); // column 0
    let mut prev_prev: Vec<f64> = vec![0.0; n + 1]; // column -1
    let mut best = partial_sums[n - 1];
    let mut col = 0;
    while prev.len() > 1 {
        let mut next = Vec::with_capacity(prev.len() - 1);
        for i in 0..prev.len() - 1 {
            let diff = prev[i + 1] - prev[i];
            let base = prev_prev[i + 1];
            let val = if diff == 0.0 { f64::INFINITY } else { base + 1.0 / diff };
            next.push(val);
        }
        col += 1;
        if col % 2 == 0 {
            match next.last() {
                Some(v) if v.is_finite() => best = *v,
                _ => break,
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            // once a column degenerates the sequence has effectively converged
            break;
        }
        prev_prev = prev;
        prev = next;
    }
    best
}

/// Sum of integrals over consecutive panels `[z_k, z_{k+1}]`, accelerated with
/// Wynn's epsilon algorithm.
///
/// `panel(a, b)` integrates the integrand over one panel. The sum starts at
/// `start` and runs through the breakpoints yielded by `zeros`; it stops
/// exactly when a breakpoint reaches `end` (beyond which the integrand is
/// negligible), or earlier once successive extrapolations agree to
/// `max(tol |I|, abs_tol)`. Agreement at the rounding level of the largest
/// partial sum is also accepted, as no extrapolation can do better.
pub fn panel_sum<P, Z>(
    mut panel: P,
    start: f64,
    zeros: Z,
    end: f64,
    tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Estimate<f64>>
where
    P: FnMut(f64, f64) -> f64,
    Z: IntoIterator<Item = f64>,
{
    let mut partial = Vec::new();
    let mut sum = 0.0;
    let mut left = start;
    let mut extrapolated: Vec<f64> = Vec::new();
    let mut panels = 0;
    let mut largest: f64 = 0.0;
    for z in zeros {
        if z <= left {
            continue;
        }
        let right = z.min(end);
        sum += panel(left, right);
        panels += 1;
        left = right;
        if right >= end {
            return Ok(Estimate { value: sum, error: 0.0, evaluations: panels });
        }
        partial.push(sum);
        largest = largest.max(sum.abs());
        // the first terms carry the non-oscillatory head; accelerate the rest
        if partial.len() >= 8 {
            let window = &partial[partial.len().saturating_sub(40)..];
            let est = wynn_epsilon(window);
            extrapolated.push(est);
            let m = extrapolated.len();
            if m >= 3 {
                let d1 = (extrapolated[m - 1] - extrapolated[m - 2]).abs();
                let d2 = (extrapolated[m - 2] - extrapolated[m - 3]).abs();
                let target = (tol * est.abs()).max(abs_tol).max(64.0 * f64::EPSILON * largest);
                if d1.max(d2) <= target {
                    return Ok(Estimate { value: est, error: d1.max(d2), evaluations: panels });
                }
            }
        }
        if panels >= max_panels {
            let m = extrapolated.len();
            let err = if m >= 2 {
                (extrapolated[m - 1] - extrapolated[m - 2]).abs()
            } else {
                f64::INFINITY
            };
            return Err(Error::Quadrature {
                estimate: *extrapolated.last().unwrap_or(&sum),
                error: err,
            });
        }
    }
    Ok(Estimate { value: sum, error: 0.0, evaluations: panels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(10);
        for deg in 0..20 {
            let got = rule.integrate(|x: f64| x.powi(deg), -1.0, 1.0);
            let want = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "degree {deg}");
        }
        let w: f64 = rule.weights().iter().sum();
        assert_relative_eq!(w, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn kronrod_panel_exact_for_degree_22() {
        let mut f = |x: f64| x.powi(22) + 3.0 * x.powi(7);
        let (v, _) = gauss_kronrod_15(&mut f, -1.0, 1.0);
        assert_relative_eq!(v, 2.0 / 23.0, max_relative = 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let est = adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-13, 1e-13, 500).unwrap();
        assert_relative_eq!(est.value, 2.0, max_relative = 1e-11);
        let est = adaptive(|x: f64| x.ln(), 0.0, 1.0, 1e-13, 1e-13, 500).unwrap();
        assert_relative_eq!(est.value, -1.0, max_relative = 1e-11);
    }

    #[test]
    fn adaptive_complex() {
        let est = adaptive(
            |x: f64| Complex64::new(0.0, x).exp(),
            0.0,
            PI,
            1e-14,
            1e-14,
            100,
        )
        .unwrap();
        assert!((est.value - Complex64::new(0.0, 2.0)).norm() < 1e-13);
    }

    #[test]
    fn graded_rule_resolves_cusp() {
        let rule = GaussLegendre::new(20);
        let v = rule.integrate_graded(|x: f64| x.powf(0.3), 0.0, 2.0, 30);
        assert_relative_eq!(v, 2f64.powf(1.3) / 1.3, max_relative = 1e-13);
    }

    #[test]
    fn wynn_accelerates_alternating_harmonic() {
        let mut s = 0.0;
        let mut partial = Vec::new();
        for k in 1..=15 {
            s += if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
            partial.push(s);
        }
        assert!((wynn_epsilon(&partial) - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn panel_sum_oscillatory_tail() {
        // int_0^inf sin(x)/x dx = pi/2
        let rule = GaussLegendre::new(20);
        let zeros = (1..).map(|k| k as f64 * PI);
        let est = panel_sum(
            |a, b| rule.integrate(|x: f64| if x == 0.0 { 1.0 } else { x.sin() / x }, a, b),
            0.0,
            zeros,
            f64::INFINITY,
            1e-12,
            0.0,
            500,
        )
        .unwrap();
        assert!((est.value - PI / 2.0).abs() < 1e-10, "{}", est.value);
    }
}

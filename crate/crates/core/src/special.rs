//! Special functions needed by the kernel and the radial transforms.
//!
//! Gamma and the integer-order Bessel functions come from `libm`; the rest is
//! small enough to live here.

use std::f64::consts::PI;

#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

#[inline]
pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

/// Surface area of the unit sphere in R^N, i.e. 2 pi^{N/2} / Gamma(N/2).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(dim as f64 / 2.0) / gamma(dim as f64 / 2.0),
    }
}

/// Average of `cos(y . xi)` over the sphere `|y| = r` with `u = r |xi|`.
///
/// In one dimension this is `cos u`, in two `J0(u)`, in three `sin(u)/u`.
pub fn radial_average(dim: usize, u: f64) -> f64 {
    match dim {
        1 => u.cos(),
        2 => bessel_j0(u),
        3 => {
            if u.abs() < 1e-3 {
                let u2 = u * u;
                1.0 - u2 / 6.0 * (1.0 - u2 / 20.0)
            } else {
                u.sin() / u
            }
        }
        _ => panic!("radial_average: unsupported dimension {dim}"),
    }
}

/// `1 - radial_average(dim, u)` without cancellation for small `u`.
pub fn one_minus_radial_average(dim: usize, u: f64) -> f64 {
    match dim {
        1 => {
            let s = (0.5 * u).sin();
            2.0 * s * s
        }
        2 => {
            if u.abs() < 1.0 {
                // sum_{j>=1} (-1)^{j+1} (u/2)^{2j} / (j!)^2
                let q = 0.25 * u * u;
                let mut term = 1.0;
                let mut sum = 0.0;
                for j in 1..40 {
                    term *= -q / (j as f64 * j as f64);
                    sum -= term;
                    if term.abs() < 1e-18 * sum.abs() {
                        break;
                    }
                }
                sum
            } else {
                1.0 - bessel_j0(u)
            }
        }
        3 => {
            if u.abs() < 1.0 {
                // sum_{j>=1} (-1)^{j+1} u^{2j} / (2j+1)!
                let u2 = u * u;
                let mut term = 1.0;
                let mut sum = 0.0;
                for j in 1..40 {
                    let k = 2.0 * j as f64;
                    term *= -u2 / (k * (k + 1.0));
                    sum -= term;
                    if term.abs() < 1e-18 * sum.abs() {
                        break;
                    }
                }
                sum
            } else {
                1.0 - u.sin() / u
            }
        }
        _ => panic!("one_minus_radial_average: unsupported dimension {dim}"),
    }
}

/// Positive zeros of the radial average factor, in increasing order.
///
/// `cos` vanishes at `(k - 1/2) pi`, `sin(u)/u` at `k pi`, and `J0` at
/// `j_{0,k}`, found from McMahon's expansion polished by Newton steps.
pub fn radial_average_zero(dim: usize, k: usize) -> f64 {
    assert!(k >= 1, "zeros are numbered from 1");
    let kf = k as f64;
    match dim {
        1 => (kf - 0.5) * PI,
        3 => kf * PI,
        2 => {
            let beta = (kf - 0.25) * PI;
            let b8 = 8.0 * beta;
            let mut x = beta + 1.0 / b8 - 124.0 / (3.0 * b8.powi(3))
                + 120928.0 / (15.0 * b8.powi(5));
            for _ in 0..6 {
                let j1 = bessel_j1(x);
                let dx = bessel_j0(x) / j1;
                x += dx;
                if dx.abs() < 1e-15 * x {
                    break;
                }
            }
            x
        }
        _ => panic!("radial_average_zero: unsupported dimension {dim}"),
    }
}

/// Upper incomplete gamma function `Gamma(a, x)` for real `a` and `x > 0`.
///
/// Legendre continued fraction evaluated with the modified Lentz method.
/// Converges quickly for `x > a + 1`, which covers every use in this crate
/// (`x >= pi`, `a <= 2.5`).
pub fn upper_incomplete_gamma(a: f64, x: f64) -> f64 {
    assert!(x > 0.0, "upper_incomplete_gamma requires x > 0");
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln()).exp() * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn incomplete_gamma_reference_values() {
        // mpmath.gammainc(a, x) at 30 digits
        assert_relative_eq!(upper_incomplete_gamma(1.0, PI), (-PI).exp(), max_relative = 1e-14);
        assert_relative_eq!(
            upper_incomplete_gamma(0.5, 4.0),
            (PI).sqrt() * libm::erfc(2.0),
            max_relative = 1e-13
        );
        // Gamma(-a, x) = (Gamma(1-a, x) - x^{-a} e^{-x}) / (-a)
        for &(a, x) in &[(0.25, PI), (0.5, 2.0 * PI), (0.75, 5.0 * PI)] {
            let lhs = upper_incomplete_gamma(-a, x);
            let rhs = (upper_incomplete_gamma(1.0 - a, x) - x.powf(-a) * (-x).exp()) / (-a);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn j0_zeros_are_zeros() {
        let known = [2.404_825_557_695_773, 5.520_078_110_286_311, 8.653_727_912_911_013];
        for (k, z) in known.iter().enumerate() {
            assert_relative_eq!(radial_average_zero(2, k + 1), *z, max_relative = 1e-14);
        }
        for k in 1..200 {
            assert!(bessel_j0(radial_average_zero(2, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn one_minus_average_is_continuous() {
        for dim in 1..=3 {
            for &u in &[1e-6, 1e-3, 0.3, 0.999_999, 1.000_001, 4.0] {
                let direct = 1.0 - radial_average(dim, u);
                let stable = one_minus_radial_average(dim, u);
                assert!((direct - stable).abs() < 1e-14, "dim {dim} u {u}");
            }
            let u = 1e-5;
            let leading = u * u / (2.0 * dim as f64);
            assert_relative_eq!(one_minus_radial_average(dim, u), leading, max_relative = 1e-9);
        }
    }

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(3), 4.0 * PI);
        for dim in 1..=3 {
            let generic = 2.0 * PI.powf(dim as f64 / 2.0) / gamma(dim as f64 / 2.0);
            assert_relative_eq!(sphere_area(dim), generic, max_relative = 1e-14);
        }
    }
}

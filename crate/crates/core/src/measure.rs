//! Order measures `a(alpha) d alpha` on (0, 2).
//!
//! A measure is a finite list of atoms plus, optionally, the nodes of a
//! quadrature rule that discretizes a continuous density on a closed
//! subinterval of (0, 2). Downstream code only ever sees the combined list of
//! weighted orders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Minimum distance between a density support and the endpoints 0 and 2.
pub const ENDPOINT_MARGIN: f64 = 1e-6;

/// One weighted fractional order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderTerm {
    pub alpha: f64,
    pub weight: f64,
}

impl OrderTerm {
    pub fn new(alpha: f64, weight: f64) -> Self {
        Self { alpha, weight }
    }
}

/// Continuous part of a measure, prior to discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DensityFamily {
    /// `a(alpha) = value`.
    Constant { value: f64 },
    /// `a(alpha) = scale * alpha^exponent`.
    Power { scale: f64, exponent: f64 },
    /// Piecewise-linear interpolation of `(alpha, a)` pairs.
    Table { points: Vec<(f64, f64)> },
}

impl DensityFamily {
    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            DensityFamily::Constant { value } => *value,
            DensityFamily::Power { scale, exponent } => scale * alpha.powf(*exponent),
            DensityFamily::Table { points } => {
                let i = points.partition_point(|p| p.0 <= alpha);
                if i == 0 {
                    points[0].1
                } else if i == points.len() {
                    points[points.len() - 1].1
                } else {
                    let (a0, v0) = points[i - 1];
                    let (a1, v1) = points[i];
                    v0 + (v1 - v0) * (alpha - a0) / (a1 - a0)
                }
            }
        }
    }
}

/// Composite Gauss-Legendre discretization of `family` on `[lo, hi]`,
/// `nodes` points in total split evenly over `panels` panels.
pub fn discretize_density(
    family: &DensityFamily,
    lo: f64,
    hi: f64,
    nodes: usize,
    panels: usize,
) -> Result<Vec<OrderTerm>> {
    if !(lo >= ENDPOINT_MARGIN && hi <= 2.0 - ENDPOINT_MARGIN && lo < hi) {
        return Err(Error::Invalid(format!(
            "density support [{lo}, {hi}] must satisfy {ENDPOINT_MARGIN} <= lo < hi <= 2 - {ENDPOINT_MARGIN}"
        )));
    }
    if panels == 0 || nodes == 0 || nodes % panels != 0 {
        return Err(Error::Invalid(format!(
            "density nodes ({nodes}) must be a positive multiple of panels ({panels})"
        )));
    }
    if let DensityFamily::Table { points } = family {
        if points.len() < 2 || points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Invalid(
                "density table needs at least two points with strictly increasing alpha".into(),
            ));
        }
        if points[0].0 > lo || points[points.len() - 1].0 < hi {
            return Err(Error::Invalid("density table does not cover the support".into()));
        }
    }
    let rule = GaussLegendre::new(nodes / panels);
    let width = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(nodes);
    for p in 0..panels {
        let a = lo + width * p as f64;
        let mid = a + 0.5 * width;
        for (x, w) in rule.nodes().iter().zip(rule.weights()) {
            let alpha = mid + 0.5 * width * x;
            let weight = 0.5 * width * w * family.eval(alpha);
            out.push(OrderTerm::new(alpha, weight));
        }
    }
    Ok(out)
}

/// The measure on (0, 2) that weights the fractional Laplacians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderMeasure {
    atoms: Vec<OrderTerm>,
    density_nodes: Vec<OrderTerm>,
}

impl OrderMeasure {
    pub fn new(atoms: Vec<OrderTerm>, density_nodes: Vec<OrderTerm>) -> Result<Self> {
        if atoms.is_empty() && density_nodes.is_empty() {
            return Err(Error::Invalid("order measure needs at least one atom or density node".into()));
        }
        for term in atoms.iter().chain(&density_nodes) {
            if term.alpha == 2.0 {
                return Err(Error::Invalid(
                    "alpha = 2 is not allowed: the hypersingular form of the operator is singular \
                     there, so 2 must stay outside the singular support of a(alpha)"
                        .into(),
                ));
            }
            if !(term.alpha > 0.0 && term.alpha < 2.0) {
                return Err(Error::Invalid(format!("order {} is outside (0, 2)", term.alpha)));
            }
            if !(term.weight > 0.0 && term.weight.is_finite()) {
                return Err(Error::Invalid(format!(
                    "weight {} at order {} must be positive",
                    term.weight, term.alpha
                )));
            }
        }
        Ok(Self { atoms, density_nodes })
    }

    /// Purely atomic measure from `(alpha, weight)` pairs.
    pub fn atomic(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(atoms.iter().map(|&(a, w)| OrderTerm::new(a, w)).collect(), Vec::new())
    }

    pub fn single(alpha: f64, weight: f64) -> Result<Self> {
        Self::atomic(&[(alpha, weight)])
    }

    pub fn atoms(&self) -> &[OrderTerm] {
        &self.atoms
    }

    pub fn density_nodes(&self) -> &[OrderTerm] {
        &self.density_nodes
    }

    /// Atoms followed by density nodes.
    pub fn terms(&self) -> impl Iterator<Item = &OrderTerm> + Clone {
        self.atoms.iter().chain(self.density_nodes.iter())
    }

    pub fn is_atomic(&self) -> bool {
        self.density_nodes.is_empty()
    }

    pub fn alpha_min(&self) -> f64 {
        self.terms().map(|t| t.alpha).fold(f64::INFINITY, f64::min)
    }

    pub fn alpha_max(&self) -> f64 {
        self.terms().map(|t| t.alpha).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn total_weight(&self) -> f64 {
        self.terms().map(|t| t.weight).sum()
    }

    /// If the measure is a single atom, its `(alpha, weight)`.
    pub fn as_single_atom(&self) -> Option<OrderTerm> {
        match (self.atoms.as_slice(), self.density_nodes.is_empty()) {
            ([only], true) => Some(*only),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_alpha_two() {
        let err = OrderMeasure::single(2.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("alpha = 2"));
    }

    #[test]
    fn rejects_bad_terms() {
        assert!(OrderMeasure::single(0.0, 1.0).is_err());
        assert!(OrderMeasure::single(1.0, 0.0).is_err());
        assert!(OrderMeasure::single(2.5, 1.0).is_err());
        assert!(OrderMeasure::new(vec![], vec![]).is_err());
    }

    #[test]
    fn density_support_margin() {
        let c = DensityFamily::Constant { value: 1.0 };
        assert!(discretize_density(&c, 0.0, 1.0, 8, 1).is_err());
        assert!(discretize_density(&c, 0.5, 2.0, 8, 1).is_err());
        assert!(discretize_density(&c, 0.5, 1.5, 30, 4).is_err());
    }

    #[test]
    fn constant_density_integrates_smooth_functions() {
        let c = DensityFamily::Constant { value: 1.0 };
        let nodes = discretize_density(&c, 0.5, 1.5, 32, 4).unwrap();
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        // int_{0.5}^{1.5} 3^alpha d alpha
        let got: f64 = nodes.iter().map(|n| n.weight * 3f64.powf(n.alpha)).sum();
        let want = (3f64.powf(1.5) - 3f64.powf(0.5)) / 3f64.ln();
        assert_relative_eq!(got, want, max_relative = 1e-14);
    }

    #[test]
    fn table_and_power_families() {
        let t = DensityFamily::Table { points: vec![(0.5, 1.0), (1.5, 3.0)] };
        assert_relative_eq!(t.eval(1.0), 2.0);
        let nodes = discretize_density(&t, 0.5, 1.5, 16, 2).unwrap();
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-14);
        let p = DensityFamily::Power { scale: 2.0, exponent: 2.0 };
        let nodes = discretize_density(&p, 0.5, 1.5, 8, 1).unwrap();
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        assert_relative_eq!(total, 2.0 * (1.5f64.powi(3) - 0.5f64.powi(3)) / 3.0, max_relative = 1e-14);
    }
}

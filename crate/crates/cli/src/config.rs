//! Run configuration, read from TOML.
//!
//! Every field has a default, so an empty file is a valid configuration; the
//! `defaults` subcommand prints the fully populated form.

use std::path::PathBuf;

use fracwalk::analytic::{QuadParams, RadialGrid, DEFAULT_GRID_NODES};
use fracwalk::diagnostics::{StudyOptions, DEFAULT_THETA, DEFAULT_XI_MAX, DEFAULT_XI_POINTS};
use fracwalk::kernel::DEFAULT_ZETA_TOL;
use fracwalk::measure::discretize_density;
use fracwalk::{DensityFamily, OrderMeasure, OrderTerm};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    /// Physical time.
    pub t: f64,
    /// Mesh width for `kernel` and `simulate`.
    pub h: f64,
    /// Strictly decreasing mesh widths for `study`; defaults to `[h]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
    /// Explicit time step; otherwise `theta * tau_max(h)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub theta: f64,
    /// Explicit truncation radius in lattice units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc_radius: Option<usize>,
    /// Physical truncation length; the radius becomes `ceil(length / h)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trunc_length: Option<f64>,
    pub walkers: usize,
    pub seed: u64,
    /// Output directory.
    pub out: PathBuf,
    pub zeta_tol: f64,
    pub measure: MeasureSpec,
    pub simulate: SimulateSpec,
    pub density: DensitySpec,
    pub study: StudySpec,
    pub oracle: OracleSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            t: 1.0,
            h: DEFAULT_H,
            h_list: None,
            tau: None,
            theta: DEFAULT_THETA,
            trunc_radius: None,
            trunc_length: None,
            walkers: 100_000,
            seed: 0,
            out: PathBuf::from("out"),
            zeta_tol: DEFAULT_ZETA_TOL,
            measure: MeasureSpec::default(),
            simulate: SimulateSpec::default(),
            density: DensitySpec::default(),
            study: StudySpec::default(),
            oracle: OracleSpec::default(),
        }
    }
}

pub const DEFAULT_H: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub alpha: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureSpec {
    pub atoms: Vec<AtomSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<ContinuousSpec>,
}

impl Default for MeasureSpec {
    fn default() -> Self {
        Self { atoms: vec![AtomSpec { alpha: 1.0, weight: 1.0 }], density: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Constant,
    Power,
    Table,
}

/// Continuous part `a(alpha)` on `[support[0], support[1]]`.
///
/// `constant` reads `value`; `power` is `scale * alpha^exponent`; `table`
/// interpolates `points = [[alpha, a], ...]` linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    pub family: FamilyName,
    pub support: [f64; 2],
    #[serde(default = "default_density_nodes")]
    pub nodes: usize,
    #[serde(default = "default_density_panels")]
    pub panels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
}

fn default_density_nodes() -> usize {
    16
}

fn default_density_panels() -> usize {
    4
}

impl ContinuousSpec {
    fn family(&self) -> Result<DensityFamily, CliError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Validation(format!("density family {:?} needs `{name}`", self.family)))
        };
        let extra = match self.family {
            FamilyName::Constant => self.scale.is_some() || self.exponent.is_some() || self.points.is_some(),
            FamilyName::Power => self.value.is_some() || self.points.is_some(),
            FamilyName::Table => self.value.is_some() || self.scale.is_some() || self.exponent.is_some(),
        };
        if extra {
            return Err(CliError::Validation(format!("density family {:?} has fields of another family", self.family)));
        }
        Ok(match self.family {
            FamilyName::Constant => DensityFamily::Constant { value: need(self.value, "value")? },
            FamilyName::Power => DensityFamily::Power {
                scale: need(self.scale, "scale")?,
                exponent: need(self.exponent, "exponent")?,
            },
            FamilyName::Table => DensityFamily::Table {
                points: self
                    .points
                    .as_ref()
                    .ok_or_else(|| CliError::Validation("density family table needs `points`".into()))?
                    .iter()
                    .map(|p| (p[0], p[1]))
                    .collect(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    /// Number of jumps; otherwise `ceil(t / tau)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    /// Histogram bin width; defaults to `h`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    /// Histogram bins are kept for `|x| <= window`.
    pub window: f64,
    /// Compare the first coordinate with the limit law.
    pub ks: bool,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self { n_steps: None, bin_width: None, window: 10.0, ks: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySpec {
    /// Geometric grid `[r_min, r_max]` with `nodes` points (origin included);
    /// otherwise the automatic grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    pub nodes: usize,
    pub quad: QuadParams,
    /// Mass tolerance of `--selfcheck`.
    pub selfcheck_tol: f64,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self { r_min: None, r_max: None, nodes: DEFAULT_GRID_NODES, quad: QuadParams::default(), selfcheck_tol: 1e-3 }
    }
}

impl DensitySpec {
    pub fn grid(&self) -> Result<RadialGrid, CliError> {
        match (self.r_min, self.r_max) {
            (None, None) => Ok(RadialGrid::Default),
            (Some(r_min), Some(r_max)) => Ok(RadialGrid::Geometric { r_min, r_max, nodes: self.nodes }),
            _ => Err(CliError::Validation("density grid needs both r_min and r_max".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub xi_max: f64,
    pub xi_points: usize,
    pub radial_ks: bool,
    pub quad: QuadParams,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self { xi_max: DEFAULT_XI_MAX, xi_points: DEFAULT_XI_POINTS, radial_ks: true, quad: QuadParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    pub alphas: Vec<f64>,
    pub dims: Vec<usize>,
    pub xis: Vec<f64>,
    /// Largest accepted relative error.
    pub tol: f64,
    pub quad: QuadParams,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 1.0, 1.5],
            dims: vec![1, 2, 3],
            xis: vec![0.5, 1.0, 2.0],
            tol: 1e-6,
            quad: QuadParams { rel_tol: 1e-12, ..QuadParams::default() },
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Structural checks that do not need any numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(1..=3).contains(&self.dim) {
            return Err(CliError::Validation(format!("dim must be 1, 2 or 3, got {}", self.dim)));
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(CliError::Validation(format!("t must be non-negative, got {}", self.t)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(CliError::Validation(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(CliError::Validation(format!("h must be positive, got {}", self.h)));
        }
        if let Some(list) = &self.h_list {
            if list.is_empty() || list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return Err(CliError::Validation("h_list must hold positive mesh widths".into()));
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Validation(format!("h_list must be strictly decreasing, got {list:?}")));
            }
        }
        if self.trunc_radius == Some(0) {
            return Err(CliError::Validation("trunc_radius must be at least 1".into()));
        }
        self.order_measure()?;
        Ok(())
    }

    pub fn order_measure(&self) -> Result<OrderMeasure, CliError> {
        let atoms = self.measure.atoms.iter().map(|a| OrderTerm::new(a.alpha, a.weight)).collect();
        let nodes = match &self.measure.density {
            Some(d) => discretize_density(&d.family()?, d.support[0], d.support[1], d.nodes, d.panels)?,
            None => Vec::new(),
        };
        Ok(OrderMeasure::new(atoms, nodes)?)
    }

    /// `h_list`, falling back to `[h]`.
    pub fn mesh_widths(&self) -> Vec<f64> {
        self.h_list.clone().unwrap_or_else(|| vec![self.h])
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            theta: self.theta,
            trunc_radius: self.trunc_radius,
            trunc_length: self.trunc_length,
            xi_max: self.study.xi_max,
            xi_points: self.study.xi_points,
            radial_ks: self.study.radial_ks,
            zeta_tol: self.zeta_tol,
            quad: self.study.quad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracwalk::analytic::InversionMethod;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trip() {
        let text = r#"
dim = 2
t = 0.5
h_list = [0.4, 0.2]
theta = 0.25
trunc_length = 30.0
walkers = 1000
seed = 9
out = "runs/a"

[[measure.atoms]]
alpha = 0.8
weight = 1.0

[[measure.atoms]]
alpha = 1.6
weight = 0.5

[measure.density]
family = "power"
support = [0.5, 1.5]
nodes = 8
panels = 2
scale = 2.0
exponent = 1.0

[simulate]
n_steps = 4
window = 3.0
ks = false

[density]
r_min = 0.001
r_max = 100.0
nodes = 64
quad = { method = "real_axis", rel_tol = 1e-9 }

[study]
xi_max = 5.0
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.measure.atoms.len(), 2);
        assert_eq!(cfg.density.quad.method, InversionMethod::RealAxis);
        assert_eq!(cfg.density.quad.max_panels, QuadParams::default().max_panels);
        assert_eq!(cfg.order_measure().unwrap().density_nodes().len(), 8);
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn table_density_round_trip() {
        let text = "[measure]\natoms = []\n[measure.density]\nfamily = \"table\"\nsupport = [0.5, 1.0]\npoints = [[0.4, 1.0], [1.2, 2.0]]\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(!cfg.order_measure().unwrap().is_atomic());
    }

    #[test]
    fn rejects_alpha_two_with_reason() {
        let err = RunConfig::from_toml("[[measure.atoms]]\nalpha = 2.0\nweight = 1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CliError::Validation(_)));
        assert!(msg.contains("alpha = 2") && msg.contains("singular support"), "{msg}");
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "dim = 4",
            "t = -1.0",
            "h = 0.0",
            "theta = 0.0",
            "h_list = [0.1, 0.2]",
            "h_list = [0.1, 0.1]",
            "bogus = 1",
            "[simulate]\nbogus = 1",
            "[measure.density]\nfamily = \"constant\"\nsupport = [0.5, 1.5]",
            "[measure.density]\nfamily = \"constant\"\nsupport = [0.0, 1.5]\nvalue = 1.0",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(CliError::Validation(_))), "{text}");
        }
    }

    #[test]
    fn mesh_width_fallbacks() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.mesh_widths(), vec![DEFAULT_H]);
        cfg.h_list = Some(vec![0.3, 0.2]);
        assert_eq!(cfg.mesh_widths(), vec![0.3, 0.2]);
    }
}

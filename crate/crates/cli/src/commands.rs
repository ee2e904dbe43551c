use std::fmt::Write as _;

use fracwalk::analytic::{green_density, symbol_oracle, DiffusionSymbol};
use fracwalk::diagnostics::{ks_distance, refinement_study, AnalyticLaw, Projection};
use fracwalk::kernel::{build_kernel, default_trunc_radius, stability_sigma, StabilityReport};
use fracwalk::montecarlo::{build_sampler, run_walks, summarize, EnsembleSummary};
use fracwalk::{LatticeKernel, OrderMeasure};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{Axis, OutputDir};
use crate::CliError;

fn open_out(cfg: &RunConfig) -> Result<OutputDir, CliError> {
    let out = OutputDir::create(&cfg.out)?;
    out.write("config.toml", &cfg.to_toml())?;
    Ok(out)
}

struct Setup {
    measure: OrderMeasure,
    kernel: LatticeKernel,
    stability: StabilityReport,
}

fn setup_kernel(cfg: &RunConfig) -> Result<Setup, CliError> {
    let measure = cfg.order_measure()?;
    let h = cfg.h;
    let tau_max = stability_sigma(&measure, cfg.dim, h, 0.0, cfg.zeta_tol)?.tau_max;
    let tau = cfg.tau.unwrap_or(cfg.theta * tau_max);
    let radius = cfg.trunc_radius.unwrap_or_else(|| default_trunc_radius(cfg.dim, h, cfg.trunc_length));
    let kernel = build_kernel(&measure, cfg.dim, h, tau, radius, cfg.zeta_tol)?;
    let stability = stability_sigma(&measure, cfg.dim, h, tau, cfg.zeta_tol)?;
    Ok(Setup { measure, kernel, stability })
}

/// Smallest `n` with `n tau >= t`.
fn steps_for(t: f64, tau: f64) -> Result<usize, CliError> {
    if t == 0.0 {
        return Ok(0);
    }
    if tau == 0.0 {
        return Err(CliError::Validation("tau = 0 never reaches t > 0; set simulate.n_steps".into()));
    }
    let mut n = (t / tau).ceil() as usize;
    while (n as f64) * tau < t {
        n += 1;
    }
    while n > 0 && ((n - 1) as f64) * tau >= t {
        n -= 1;
    }
    Ok(n)
}

#[derive(Serialize)]
struct KernelOut<'a> {
    config: &'a RunConfig,
    kernel: fracwalk::kernel::KernelDocument,
    stability: &'a StabilityReport,
    renormalization: f64,
}

pub fn kernel(cfg: &RunConfig, selfcheck: bool) -> Result<(), CliError> {
    let s = setup_kernel(cfg)?;
    let k = &s.kernel;
    println!("kernel: dim {}, h {}, tau {}, K {}", k.dim(), k.h(), k.tau(), k.trunc_radius());
    println!("sigma {} (tau_max {}), p0 {}", k.sigma(), k.tau_max(), k.p0());
    println!("tail mass {:e}, renormalization {}", k.tail_mass(), k.renormalization());
    if k.tail_warning() {
        println!("warning: truncated tail exceeds 10% of sigma; increase trunc_radius");
    }
    if selfcheck {
        let total = k.total_probability();
        if (total - 1.0).abs() > 1e-12 || k.outcomes().any(|(_, p)| p < 0.0) {
            return Err(CliError::Runtime(format!("selfcheck failed: total probability {total}")));
        }
        println!("selfcheck: total probability {total}");
    }
    let out = open_out(cfg)?;
    let doc = k.to_document();
    let mut csv = String::from("radius,prob_per_site,multiplicity\n");
    for shell in &doc.shells {
        let _ = writeln!(csv, "{},{:e},{}", k.h() * (shell.norm_sq as f64).sqrt(), shell.prob_per_site, shell.multiplicity);
    }
    out.plot(
        "kernel_shells",
        &csv,
        "transition probability per site",
        Axis::log("radius", "|h k|"),
        vec![Axis::log("prob_per_site", "p_k")],
    )?;
    let path = out.json(
        "kernel.json",
        &KernelOut { config: cfg, kernel: doc, stability: &s.stability, renormalization: k.renormalization() },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct SimulateOut<'a> {
    config: &'a RunConfig,
    /// Time of the limit law used for `ks`.
    t_law: f64,
    /// KS distance of the first coordinate to the limit law.
    ks: Option<f64>,
    summary: EnsembleSummary,
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = setup_kernel(cfg)?;
    let k = &s.kernel;
    let (n, t_law) = match cfg.simulate.n_steps {
        Some(n) => (n, n as f64 * k.tau()),
        None => (steps_for(cfg.t, k.tau())?, cfg.t),
    };
    let ensemble = run_walks(&build_sampler(k)?, n, cfg.walkers, cfg.seed)?;
    let bin_width = cfg.simulate.bin_width.unwrap_or(k.h());
    let summary = summarize(&ensemble, bin_width, cfg.simulate.window)?;
    let ks = if cfg.simulate.ks && t_law > 0.0 {
        let law = AnalyticLaw::new(&s.measure, cfg.dim, t_law, Projection::default(), &cfg.density.quad)?;
        Some(ks_distance(&ensemble, Projection::default(), |x| law.cdf(x))?)
    } else {
        None
    };
    let out = open_out(cfg)?;
    out.write("ensemble.csv", &ensemble.to_csv())?;
    // first bin coordinate on x; remaining coordinates and the density as series
    let mut series: Vec<Axis> =
        ["center2", "center3"].iter().take(cfg.dim - 1).map(|c| Axis::linear(c, c)).collect();
    series.push(Axis::linear("density", "density"));
    out.plot("histogram", &summary.histogram.to_csv(), "walker histogram", Axis::linear("center1", "x"), series)?;
    let path = out.json("summary.json", &SimulateOut { config: cfg, t_law, ks, summary })?;
    println!("simulate: {} walkers, {} steps of tau {} on h {}", cfg.walkers, n, k.tau(), k.h());
    if let Some(d) = ks {
        println!("ks {d} against the limit law at t = {t_law}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DensityOut<'a> {
    config: &'a RunConfig,
    mass: f64,
    density: fracwalk::analytic::RadialDensityDocument,
}

pub fn density(cfg: &RunConfig, selfcheck: bool) -> Result<(), CliError> {
    let measure = cfg.order_measure()?;
    let sym = DiffusionSymbol::new(&measure, cfg.dim)?;
    let d = green_density(&sym, cfg.t, &cfg.density.grid()?, &cfg.density.quad)?;
    let mass = d.mass();
    println!("density: dim {}, t {}, {} nodes to r = {:e}", cfg.dim, cfg.t, d.radii().len(), d.r_max());
    println!("G(0) {}, mass {}", d.values()[0], mass);
    if !d.is_positive() {
        println!("warning: tabulated density dips below the positivity floor (min {:e})", d.min_value());
    }
    if selfcheck {
        if (mass - 1.0).abs() > cfg.density.selfcheck_tol {
            return Err(CliError::Runtime(format!(
                "selfcheck failed: mass {mass} is not within {} of 1",
                cfg.density.selfcheck_tol
            )));
        }
        println!("selfcheck: mass within {} of 1", cfg.density.selfcheck_tol);
    }
    let out = open_out(cfg)?;
    out.plot("density", &d.to_csv(), "fundamental solution", Axis::log("r", "r"), vec![Axis::log("G", "G(t, r)")])?;
    let path = out.json("density.json", &DensityOut { config: cfg, mass, density: d.to_document() })?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct StudyOut<'a> {
    config: &'a RunConfig,
    report: &'a fracwalk::diagnostics::ConvergenceReport,
}

pub fn study(cfg: &RunConfig) -> Result<(), CliError> {
    let measure = cfg.order_measure()?;
    let h_list = cfg.mesh_widths();
    let report = refinement_study(&measure, cfg.dim, cfg.t, &h_list, cfg.walkers, cfg.seed, &cfg.study_options())?;
    let out = open_out(cfg)?;
    let csv = report.to_csv();
    out.write("study.csv", &csv)?;
    out.plot(
        "study_cf",
        &csv,
        "characteristic function error",
        Axis::log("h", "h"),
        vec![Axis::log("cf_sup_error", "sup |p^n - e^{tB}|")],
    )?;
    let mut ks = vec![Axis::linear("ks_distance", "KS, first coordinate")];
    if cfg.dim >= 2 && cfg.study.radial_ks {
        ks.push(Axis::linear("ks_radial", "KS, radius"));
    }
    out.plot("study_ks", &csv, "Kolmogorov-Smirnov distance", Axis::log("h", "h"), ks)?;
    let path = out.json("study.json", &StudyOut { config: cfg, report: &report })?;
    println!("h,tau,n_steps,cf_sup_error,ks_distance");
    for r in &report.rows {
        println!("{},{},{},{:e},{}", r.h, r.tau, r.n_steps, r.cf_sup_error, r.ks_distance);
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct OracleCase {
    alpha: f64,
    dim: usize,
    xi: f64,
    value: f64,
    exact: f64,
    rel_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct OracleOut<'a> {
    config: &'a RunConfig,
    tol: f64,
    pass: bool,
    cases: &'a [OracleCase],
}

pub fn oracle(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = &cfg.oracle;
    let mut cases = Vec::new();
    for &alpha in &spec.alphas {
        for &dim in &spec.dims {
            for &xi in &spec.xis {
                let value = symbol_oracle(alpha, dim, xi, &spec.quad)?;
                let exact = -xi.powf(alpha);
                let rel_error = ((value - exact) / exact).abs();
                cases.push(OracleCase { alpha, dim, xi, value, exact, rel_error, pass: rel_error <= spec.tol });
            }
        }
    }
    let mut csv = String::from("alpha,dim,xi,value,exact,rel_error\n");
    println!("alpha dim   xi            value      rel_error");
    for c in &cases {
        let _ = writeln!(csv, "{},{},{},{},{},{:e}", c.alpha, c.dim, c.xi, c.value, c.exact, c.rel_error);
        println!("{:5} {:3} {:4} {:16.12} {:14.3e}{}", c.alpha, c.dim, c.xi, c.value, c.rel_error, if c.pass { "" } else { "  FAIL" });
    }
    let pass = cases.iter().all(|c| c.pass);
    let out = open_out(cfg)?;
    out.write("oracle.csv", &csv)?;
    out.json("oracle.json", &OracleOut { config: cfg, tol: spec.tol, pass, cases: &cases })?;
    let worst = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    if pass {
        println!("oracle: {} cases, largest relative error {worst:e} <= {}", cases.len(), spec.tol);
        Ok(())
    } else {
        Err(CliError::Runtime(format!("oracle: largest relative error {worst:e} exceeds {}", spec.tol)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_bracket_time() {
        assert_eq!(steps_for(0.0, 0.1).unwrap(), 0);
        assert_eq!(steps_for(1.0, 0.25).unwrap(), 4);
        for (t, tau) in [(1.0, 0.3), (0.7, 0.1), (2.0, 0.047_746_482_927_568_6)] {
            let n = steps_for(t, tau).unwrap();
            assert!(n as f64 * tau >= t && (n as f64 * tau) < t + tau);
        }
        assert!(steps_for(1.0, 0.0).is_err());
    }
}

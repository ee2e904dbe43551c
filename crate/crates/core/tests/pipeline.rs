use fracwalk::analytic::{cauchy_cdf, green_density, DiffusionSymbol, QuadParams, RadialGrid};
use fracwalk::diagnostics::{ks_distance, Projection};
use fracwalk::evolution::{evolve, EvolutionOptions};
use fracwalk::kernel::{build_kernel, DEFAULT_ZETA_TOL};
use fracwalk::montecarlo::{build_sampler, run_walks};
use fracwalk::OrderMeasure;

#[test]
fn walk_histogram_matches_master_equation() {
    let m = OrderMeasure::single(1.0, 1.0).unwrap();
    let k = build_kernel(&m, 1, 0.1, 0.01, 64, DEFAULT_ZETA_TOL).unwrap();
    let exact = evolve(&k, 16, &EvolutionOptions::default()).unwrap();
    let ens = run_walks(&build_sampler(&k).unwrap(), 16, 40_000, 21).unwrap();
    let tv = ens.total_variation(&exact).unwrap();
    assert!(tv < 0.03, "total variation {tv}");
}

#[test]
fn walk_approaches_cauchy_law() {
    let m = OrderMeasure::single(1.0, 1.0).unwrap();
    let h = 0.1;
    let k = build_kernel(&m, 1, h, 0.15 * h, 2000, DEFAULT_ZETA_TOL).unwrap();
    let n = (1.0 / k.tau()).ceil() as usize;
    let ens = run_walks(&build_sampler(&k).unwrap(), n, 20_000, 4).unwrap();
    let d = ks_distance(&ens, Projection::default(), |x| cauchy_cdf(1.0, x)).unwrap();
    assert!(d < 0.04, "KS {d}");
}

#[test]
fn plane_density_is_normalized_and_positive() {
    let m = OrderMeasure::atomic(&[(0.8, 1.0), (1.6, 0.5)]).unwrap();
    let sym = DiffusionSymbol::new(&m, 2).unwrap();
    let d = green_density(&sym, 0.5, &RadialGrid::Default, &QuadParams::default()).unwrap();
    assert!(d.is_positive());
    assert!((d.mass() - 1.0).abs() < 1e-5);
    let half = d.cdf_radial(1.0);
    assert!(half > 0.0 && half < 1.0);
}

use fracwalk::analytic::{cauchy_cdf, DiffusionSymbol};
use fracwalk::diagnostics::{cf_sup_error, ks_statistic, xi_grid};
use fracwalk::evolution::{convolve, LatticeDistribution};
use fracwalk::kernel::{build_kernel, stability_sigma, DEFAULT_ZETA_TOL};
use fracwalk::measure::discretize_density;
use fracwalk::montecarlo::AliasTable;
use fracwalk::{DensityFamily, OrderMeasure, OrderTerm};
use proptest::prelude::*;

fn measure() -> impl Strategy<Value = OrderMeasure> {
    let atoms = prop::collection::vec((0.05f64..1.95, 0.1f64..3.0), 1..4);
    let density = prop::option::of((0.1f64..1.0, 0.2f64..0.9, 0.1f64..2.0));
    (atoms, density).prop_map(|(atoms, density)| {
        let atoms = atoms.into_iter().map(|(a, w)| OrderTerm::new(a, w)).collect();
        let nodes = match density {
            Some((lo, width, value)) => {
                discretize_density(&DensityFamily::Constant { value }, lo, lo + width, 8, 2).unwrap()
            }
            None => Vec::new(),
        };
        OrderMeasure::new(atoms, nodes).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_is_a_symmetric_probability(m in measure(), dim in 1usize..=3, h in 0.05f64..0.5, frac in 0.0f64..=1.0) {
        let tau_max = stability_sigma(&m, dim, h, 0.0, DEFAULT_ZETA_TOL).unwrap().tau_max;
        let radius = [64, 16, 6][dim - 1];
        let k = build_kernel(&m, dim, h, frac * tau_max, radius, DEFAULT_ZETA_TOL).unwrap();
        prop_assert!((k.total_probability() - 1.0).abs() < 1e-12);
        prop_assert!((k.p0() - (1.0 - k.sigma().min(1.0))).abs() < 1e-15);
        for (site, p) in k.outcomes() {
            prop_assert!(p >= 0.0);
            let neg: Vec<i64> = site.iter().map(|c| -c).collect();
            prop_assert_eq!(k.prob(&neg), p);
            let mut swapped = site.to_vec();
            swapped.reverse();
            prop_assert_eq!(k.prob(&swapped), p);
        }
    }

    #[test]
    fn stability_is_linear_in_tau(m in measure(), dim in 1usize..=3, h in 0.05f64..0.5, tau in 0.0f64..1.0) {
        let r = stability_sigma(&m, dim, h, tau, DEFAULT_ZETA_TOL).unwrap();
        prop_assert!((r.sigma - tau / r.tau_max).abs() <= 1e-12 * r.sigma.max(1.0));
        let sum: f64 = r.contributions.iter().map(|c| c.contribution).sum();
        prop_assert!((sum - r.sigma).abs() <= 1e-12 * r.sigma.max(1e-300));
    }

    #[test]
    fn alias_table_reproduces_weights(w in prop::collection::vec(0.0f64..10.0, 1..40)) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let total: f64 = w.iter().sum();
        let table = AliasTable::new(&w).unwrap();
        for (got, want) in table.induced_probabilities().iter().zip(&w) {
            prop_assert!((got - want / total).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_commutes_and_conserves_mass(
        a in prop::collection::vec(0.0f64..1.0, 5),
        b in prop::collection::vec(0.0f64..1.0, 9),
    ) {
        let p = LatticeDistribution::from_dense(1, 0.1, 2, a.clone()).unwrap();
        let q = LatticeDistribution::from_dense(1, 0.1, 4, b.clone()).unwrap();
        let pq = convolve(&p, &q).unwrap();
        let qp = convolve(&q, &p).unwrap();
        for (x, y) in pq.dense().iter().zip(qp.dense()) {
            prop_assert!((x - y).abs() < 1e-14);
        }
        let want = a.iter().sum::<f64>() * b.iter().sum::<f64>();
        prop_assert!((pq.total_mass() - want).abs() < 1e-12 * want.max(1.0));
    }

    #[test]
    fn ks_lies_in_unit_interval(x in prop::collection::vec(-50.0f64..50.0, 1..200), t in 0.1f64..5.0) {
        let d = ks_statistic(&x, |v| cauchy_cdf(t, v)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn cf_error_vanishes_at_zero_frequency(m in measure(), dim in 1usize..=3, n in 0usize..50) {
        let h = 0.2;
        let tau_max = stability_sigma(&m, dim, h, 0.0, DEFAULT_ZETA_TOL).unwrap().tau_max;
        let k = build_kernel(&m, dim, h, 0.5 * tau_max, [32, 8, 4][dim - 1], DEFAULT_ZETA_TOL).unwrap();
        let sym = DiffusionSymbol::new(&m, dim).unwrap();
        let t = n as f64 * k.tau();
        prop_assert_eq!(cf_sup_error(&k, n, &sym, t, &[vec![0.0; dim]]).unwrap(), 0.0);
        let grid = xi_grid(dim, 5.0, 11).unwrap();
        prop_assert!(cf_sup_error(&k, n, &sym, t, &grid).unwrap() >= 0.0);
    }
}

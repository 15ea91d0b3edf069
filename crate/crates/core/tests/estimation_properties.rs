use proptest::prelude::*;

use stabent::estimation::{bin_pipeline, conditioned_set, coupling_tv};
use stabent::models::{Distribution, Drift, SystemModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coupling_is_half_l1(raw in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let s: f64 = raw.iter().sum::<f64>().max(1e-12);
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let n = p.len();
        let half_l1 = 0.5 * p.iter().map(|v| (v - 1.0 / n as f64).abs()).sum::<f64>();
        prop_assert!((coupling_tv(&p, n).unwrap() - half_l1).abs() <= 1e-12);
    }

    #[test]
    fn pipeline_invariants(centers in prop::collection::vec(0.05f64..0.95, 1..60), radius in 0.001f64..0.05, l in 1usize..6) {
        let r = bin_pipeline(&centers, radius, l, (0.0, 1.0), 0.8, 1.25, None).unwrap();
        prop_assert!(r.checks.all(), "{:?}", r.checks);
        prop_assert!(r.n2 as f64 >= 0.5 * r.measure_m_t / (2.0 * radius) - 1.0);
        prop_assert_eq!(r.n3, r.n2 / l + 1);
        prop_assert!(r.coupling_beta >= 0.0 && r.coupling_beta <= 1.0);
    }

    #[test]
    fn conditioned_sets_contract(
        t_len in 5usize..16,
        u in prop::collection::vec(-1.0f64..1.0, 16),
        w in prop::collection::vec(-0.5f64..0.5, 16),
        r_star in 0.07f64..0.33,
    ) {
        prop_assume!(t_len as f64 >= 1.0 / (3.0 * r_star) + 1.0);
        let m = SystemModel::additive(Drift::scalar_linear(2.0), Distribution::Zero, Distribution::Zero).unwrap();
        let s = conditioned_set(&m, &u, &w, 1.0, r_star, t_len, (-3.0, 3.0), 2.0, None).unwrap();
        if let Some(d) = s.diameter {
            prop_assert!(d <= 2.0 * 2f64.powf(-(1.0 - 3.0 * r_star) * t_len as f64) + s.resolution);
        }
    }
}

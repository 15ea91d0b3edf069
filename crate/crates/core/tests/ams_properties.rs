use proptest::prelude::*;

use stabent::ams::{cesaro_measure, empirical_moment, Region};
use stabent::models::{Control, Distribution, Drift, SystemModel};

fn ensemble(a: f64, seed: u64, count: usize, horizon: usize) -> stabent::models::TrajectoryEnsemble {
    let m = SystemModel::additive(
        Drift::scalar_linear(a),
        Distribution::Gaussian { mean: 0.0, std_dev: 1.0 },
        Distribution::Uniform { low: -2.0, high: 2.0 },
    )
    .unwrap();
    m.sample_ensemble(&vec![Control::scalar(0.0); horizon], count, horizon, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_box_is_additive(seed in any::<u64>(), a in -0.95f64..0.95, lo in -3.0f64..0.0, mid in 0.0f64..1.0, hi in 1.0f64..3.0) {
        let e = ensemble(a, seed, 20, 40);
        let b1 = Region::interval(lo, mid);
        let b2 = Region::Difference { base: Box::new(Region::interval(mid, hi)), minus: Box::new(b1.clone()) };
        let union = Region::Union { parts: vec![b1.clone(), b2.clone()] };
        let (q1, q2, qu) = (
            cesaro_measure(&e, &b1, 40).unwrap(),
            cesaro_measure(&e, &b2, 40).unwrap(),
            cesaro_measure(&e, &union, 40).unwrap(),
        );
        prop_assert_eq!(q1.hits + q2.hits, qu.hits);
    }

    #[test]
    fn complement_in_bounding_box(seed in any::<u64>(), a in -0.95f64..0.95, r in 0.1f64..3.0) {
        let e = ensemble(a, seed, 20, 40);
        let bound = e.trajectories.iter().flat_map(|t| t.states().map(|x| x[0].abs()).collect::<Vec<_>>()).fold(0.0, f64::max);
        let outer = Region::interval(-bound, bound);
        let b = Region::interval(-r, r);
        let rest = Region::Difference { base: Box::new(outer), minus: Box::new(b.clone()) };
        let total = cesaro_measure(&e, &b, 41).unwrap().value + cesaro_measure(&e, &rest, 41).unwrap().value;
        prop_assert!(total <= 1.0 + 1e-12);
        prop_assert!(total >= 1.0 - 1e-12);
    }

    #[test]
    fn markov_inequality(seed in any::<u64>(), a in -0.95f64..0.95, kappa in 0.5f64..6.0, p in 1.0f64..3.0) {
        let (n, t) = (30, 50);
        let e = ensemble(a, seed, n, t);
        let outside = 1.0 - cesaro_measure(&e, &Region::Ball { radius: kappa }, t).unwrap().value;
        let m = empirical_moment(&e, p, t).unwrap();
        prop_assert!(outside <= m.value / kappa.powf(p) + 2.0 / ((n * t) as f64).sqrt());
    }
}

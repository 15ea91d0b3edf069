use proptest::prelude::*;

use stabent::combinatorics::{binomial_tail_rate, disjoint_subcollection, measure, merge_intervals, sanov_rate};

fn collection() -> impl Strategy<Value = Vec<(f64, f64)>> {
    (0.01f64..3.0, prop::collection::vec(-20.0f64..20.0, 1..=50))
        .prop_map(|(len, lefts)| lefts.into_iter().map(|a| (a, a + len)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn selection_is_disjoint_and_half_measure(iv in collection()) {
        let len = iv[0].1 - iv[0].0;
        let s = disjoint_subcollection(&iv).unwrap();
        let sel: Vec<_> = s.selected.iter().map(|&i| iv[i]).collect();
        for w in sel.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        prop_assert!(s.selected_measure >= 0.5 * measure(&merge_intervals(&iv)) - 1e-9);
        for l in &s.leftovers {
            prop_assert!(l.measure <= len + 1e-9);
        }
        // Selected plus leftovers plus trailing rebuild the union.
        let rebuilt = s.selected_measure + s.leftovers.iter().map(|l| l.measure).sum::<f64>() + measure(&s.trailing);
        prop_assert!((rebuilt - s.union_measure).abs() <= 1e-9 * (1.0 + s.union_measure));
    }

    #[test]
    fn tail_rate_below_zero_and_above_count(t in 1usize..300, r in 0.01f64..1.0, alpha in 0.05f64..0.95) {
        let v = binomial_tail_rate(t, r, alpha, 1.0 - alpha).unwrap();
        prop_assert!(v <= 1e-12);
        // The single largest term is a lower bound for the sum.
        let start = ((1.0 - r) * t as f64 - 1e-9).ceil() as usize;
        prop_assert!(v >= (start as f64 * alpha.log2() + (t - start) as f64 * (1.0 - alpha).log2()) / t as f64 - 1e-12
            || start == 0);
    }
}

#[test]
fn tail_rate_approaches_limit() {
    let limit = sanov_rate(0.25, 0.5, 0.5).unwrap();
    let gaps: Vec<f64> =
        [64, 128, 256, 512].iter().map(|&t| (binomial_tail_rate(t, 0.25, 0.5, 0.5).unwrap() - limit).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

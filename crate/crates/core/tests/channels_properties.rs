use proptest::prelude::*;

use stabent::channels::{dmc_capacity, random_code_experiment, ChannelModel};

fn stochastic_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, cols), rows).prop_map(|m| {
        m.into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.into_iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capacity_brackets_and_input_permutation(m in (2usize..5, 2usize..5).prop_flat_map(|(r, c)| stochastic_matrix(r, c)), shift in 1usize..4) {
        let tol = 1e-9;
        let a = dmc_capacity(&ChannelModel::dmc(m.clone()).unwrap(), tol).unwrap();
        prop_assert!(a.lower <= a.upper + 1e-15);
        prop_assert!(a.upper - a.lower <= tol);
        let mut p = m.clone();
        p.rotate_left(shift % m.len());
        let b = dmc_capacity(&ChannelModel::dmc(p).unwrap(), tol).unwrap();
        prop_assert!((a.capacity - b.capacity).abs() <= 2.0 * tol);
    }
}

#[test]
fn block_error_non_decreasing_in_rate() {
    let ch = ChannelModel::bsc(0.11).unwrap();
    let k = 400;
    let rates = [0.2, 0.35, 0.45, 0.5, 0.55, 0.7, 0.9];
    let errs: Vec<f64> =
        rates.iter().map(|&r| random_code_experiment(&ch, r, 100, k, 11).unwrap().error_rate).collect();
    let slack = 2.0 / (k as f64).sqrt();
    for w in errs.windows(2) {
        assert!(w[1] >= w[0] - slack, "{errs:?}");
    }
}

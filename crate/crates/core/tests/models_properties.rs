use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use stabent::models::{Control, Distribution, Drift, SemilinearModel, SystemModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semilinear_matches_matrix_product(
        entries in prop::collection::vec(-1.5f64..1.5, 18),
        modes in prop::collection::vec(0usize..2, 1..=20),
        x0 in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mats = vec![DMatrix::from_row_slice(3, 3, &entries[..9]), DMatrix::from_row_slice(3, 3, &entries[9..])];
        let sl = SemilinearModel::homogeneous(vec!["a".into(), "b".into()], mats).unwrap();
        let m = SystemModel::semilinear(sl.clone(), Distribution::Zero, Distribution::Zero).unwrap();
        let controls: Vec<Control> = modes.iter().map(|&k| Control::switched(k, vec![])).collect();
        let noise = vec![vec![0.0; 3]; modes.len()];
        let tr = m.simulate(&x0, &controls, &noise).unwrap();
        let expect = sl.transition(&modes) * DVector::from_column_slice(&x0);
        let got = DVector::from_column_slice(tr.state(modes.len()));
        prop_assert!((&got - &expect).norm() <= 1e-10 * expect.norm().max(1e-300) + 1e-300);
    }

    #[test]
    fn ensembles_reproduce(seed in any::<u64>()) {
        let m = SystemModel::additive(
            Drift::scalar_linear(1.5),
            Distribution::Gaussian { mean: 0.0, std_dev: 0.3 },
            Distribution::Uniform { low: -1.0, high: 1.0 },
        )
        .unwrap();
        let u = vec![Control::scalar(0.1); 15];
        prop_assert_eq!(m.sample_ensemble(&u, 8, 15, seed).unwrap(), m.sample_ensemble(&u, 8, 15, seed).unwrap());
    }
}

#[test]
fn volume_expanding_check_on_many_points() {
    let ok = SystemModel::additive(Drift::InverseSqrtExpanding, Distribution::Zero, Distribution::Zero).unwrap();
    assert!(ok.check_volume_expanding(50.0, 10_000, 1).is_ok());
    let contracting = SystemModel::additive(
        Drift::Polynomial { coefficients: vec![0.0, 0.5, 0.0, 1.0] },
        Distribution::Zero,
        Distribution::Zero,
    )
    .unwrap();
    assert!(contracting.check_volume_expanding(1.0, 10_000, 1).is_err());
}

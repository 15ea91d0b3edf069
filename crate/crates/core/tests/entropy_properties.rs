use stabent::ams::Region;
use stabent::entropy::{greedy_spanning_estimate, verify_spanning_set, CandidateSource};
use stabent::models::{Distribution, Drift, SystemModel};
use stabent::policies::ZoomConfig;

fn noisy_doubling() -> SystemModel {
    SystemModel::additive(
        Drift::scalar_linear(2.0),
        Distribution::Uniform { low: -0.05, high: 0.05 },
        Distribution::Uniform { low: -1.0, high: 1.0 },
    )
    .unwrap()
}

#[test]
fn spanning_sets_replay_and_shrink_with_tolerance() {
    let m = noisy_doubling();
    let b = Region::interval(-1.0, 1.0);
    let src = CandidateSource::Policy { policy: ZoomConfig::new(3) };
    let mut last = usize::MAX;
    for rho in [0.0, 0.1, 0.3, 0.6] {
        let e = greedy_spanning_estimate(&m, &b, 6, rho, 0.0, 400, &src, 21).unwrap();
        assert!(verify_spanning_set(&m, &e.set, 21).unwrap());
        assert!(e.count <= last, "rho={rho}: {} > {last}", e.count);
        last = e.count;
    }
    let mut last = usize::MAX;
    for r in [0.0, 0.2, 0.4] {
        let e = greedy_spanning_estimate(&m, &b, 6, 0.0, r, 400, &src, 21).unwrap();
        assert!(verify_spanning_set(&m, &e.set, 21).unwrap());
        assert!(e.count <= last, "r={r}: {} > {last}", e.count);
        last = e.count;
    }
}

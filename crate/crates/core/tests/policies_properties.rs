use std::collections::HashSet;

use proptest::prelude::*;

use stabent::channels::ChannelModel;
use stabent::models::{Distribution, Drift, SystemModel};
use stabent::policies::{closed_loop_run, PolicyState, ZoomConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decoder_replay_and_rate_accounting(seed in any::<u64>(), bits in 0u32..4, a in 1.1f64..3.0, p in 0.0f64..0.2) {
        let m = SystemModel::additive(
            Drift::scalar_linear(a),
            Distribution::Uniform { low: -0.2, high: 0.2 },
            Distribution::Uniform { low: -1.0, high: 1.0 },
        )
        .unwrap();
        let policy = PolicyState::new(&ZoomConfig::new(bits), &m).unwrap();
        let q = 1usize << bits;
        let ch = if q > 1 { ChannelModel::q_ary_symmetric(q, p).unwrap() } else { ChannelModel::noiseless(1).unwrap() };
        let t_len = 12;
        let run = closed_loop_run(&m, &policy, &ch, t_len, 30, seed).unwrap();
        for log in &run.logs {
            let received: Vec<usize> = log.iter().map(|r| r.received).collect();
            let replay = policy.replay_controls(&received).unwrap();
            let used: Vec<Vec<f64>> = log.iter().map(|r| r.control.clone()).collect();
            prop_assert_eq!(replay, used);
        }
        for d in run.distinct_symbols_per_step() {
            prop_assert!(d <= q);
        }
        prop_assert!(run.distinct_control_sequences(t_len) as f64 <= (q as f64).powi(t_len as i32));
        let seqs: HashSet<Vec<usize>> = run.logs.iter().map(|l| l.iter().map(|r| r.received).collect()).collect();
        prop_assert!(run.distinct_control_sequences(t_len) <= seqs.len());
    }
}

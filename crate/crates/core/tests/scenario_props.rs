mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use splitwise::decision::{candidate_strategies, ChannelState};
use splitwise::scenario::{evaluate_scenario, gain_map, BaselinePolicy, Scenario};

fn random_scenario(seed: u64, batches: &[u32], steps: usize) -> Scenario {
    let mut rng = seeded(seed);
    Scenario::from_states((0..steps).map(|_| {
        let b = batches[rng.gen_range(0..batches.len())];
        ChannelState::new(b, 10f64.powf(rng.gen_range(5.0..8.5))).unwrap()
    }))
}

fn baselines(p: &splitwise::ModelProfile) -> Vec<BaselinePolicy> {
    let mut v = vec![BaselinePolicy::AlwaysFullOffload, BaselinePolicy::AlwaysNoOffload];
    v.extend(
        candidate_strategies(p, true)
            .iter()
            .filter_map(|s| s.split_layer())
            .map(BaselinePolicy::StaticSplit),
    );
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gain_is_nonnegative(seed in any::<u64>(), steps in 1usize..40, penalty in prop_oneof![Just(0.0), 0.0f64..100.0]) {
        let p = random_profile(&mut seeded(seed), 30, &[1, 4, 16]);
        let s = random_scenario(seed ^ 0x5eed, &[1, 4, 16], steps);
        for base in baselines(&p) {
            let rep = evaluate_scenario(&p, &s, base, true, penalty).unwrap();
            prop_assert!(rep.gain >= 0.0, "{base}: {}", rep.gain);
            prop_assert_eq!(rep.per_step.len(), steps);
            let mean = rep.per_step.iter().map(|r| r.step_gain).sum::<f64>() / steps as f64;
            prop_assert!((mean - rep.gain).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_step_equals_gain_map_cell(seed in any::<u64>(), bi in 0usize..3, ri in 0usize..8) {
        let p = random_profile(&mut seeded(seed), 30, &[1, 4, 16]);
        let rates = grid_rates_bps();
        let (b, r) = ([1, 4, 16][bi], rates[ri]);
        let s = Scenario::from_states([ChannelState::new(b, r).unwrap()]);
        for base in baselines(&p) {
            let map = gain_map(&p, base, &[1, 4, 16], &rates).unwrap();
            let rep = evaluate_scenario(&p, &s, base, true, 0.0).unwrap();
            prop_assert_eq!(rep.gain, map.cell(b, r).unwrap().gain);
        }
    }

    #[test]
    fn gain_invariant_under_time_rescaling(seed in any::<u64>(), steps in 1usize..20, k in prop::sample::select(vec![0.25, 2.0, 8.0])) {
        let p = random_profile(&mut seeded(seed), 30, &[1, 4]);
        let s = random_scenario(seed.rotate_left(7), &[1, 4], steps);
        let scaled_p = p.scale_durations(k).unwrap();
        let scaled_s = Scenario::from_states(s.states().map(|c| ChannelState::new(c.batch, c.rate_bps / k).unwrap()));
        for base in baselines(&p) {
            let a = evaluate_scenario(&p, &s, base, true, 0.0).unwrap();
            let b = evaluate_scenario(&scaled_p, &scaled_s, base, true, 0.0).unwrap();
            prop_assert!((a.gain - b.gain).abs() <= 1e-9 * a.gain.max(1.0), "{} vs {}", a.gain, b.gain);
        }
    }
}

#[test]
fn non_candidate_static_split_is_rejected() {
    let p = splitwise::profile::fixtures::toy3();
    let s = Scenario::from_states([ChannelState::new(1, 5000.0).unwrap()]);
    let err = evaluate_scenario(&p, &s, BaselinePolicy::StaticSplit(1), true, 0.0).unwrap_err();
    assert!(matches!(err, splitwise::Error::NotCandidate { .. }), "{err}");
    assert!(evaluate_scenario(&p, &s, BaselinePolicy::StaticSplit(3), true, 0.0).is_err());
    assert!(evaluate_scenario(&p, &Scenario::default(), BaselinePolicy::StaticSplit(2), true, 0.0).is_err());
}

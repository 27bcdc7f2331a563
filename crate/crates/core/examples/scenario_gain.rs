//! Replay a generated bandwidth trace and compare dynamic selection with
//! every static baseline.
//!
//! cargo run --example scenario_gain

use splitwise::decision::{candidate_strategies, ChannelState};
use splitwise::profile::{generate_synthetic_profile, RatioPattern, SyntheticSpec};
use splitwise::scenario::{evaluate_scenario, generate_trace, BaselinePolicy, TraceBounds, TraceSpec};

fn main() -> splitwise::Result<()> {
    let spec = SyntheticSpec::new(
        24,
        RatioPattern::Stages {
            levels: vec![2.0, 0.7, 0.3, 0.1, 0.02],
            expansion: 1.5,
        },
        42,
    )
    .with_input_bytes(380 * 380 * 3)
    .with_batches([1, 2, 4, 8, 16, 32, 64]);
    let p = generate_synthetic_profile(&spec)?;
    let spec = TraceSpec::RandomWalk {
        steps: 200,
        start: ChannelState::new(8, 8e6)?,
        factor: 2.0,
        p_move: 0.3,
        walk_batch: true,
    };
    let trace = generate_trace(&spec, &TraceBounds::default(), 11)?;

    let mut baselines = vec![BaselinePolicy::AlwaysFullOffload, BaselinePolicy::AlwaysNoOffload];
    baselines.extend(
        candidate_strategies(&p, true)
            .iter()
            .filter_map(|s| s.split_layer())
            .map(BaselinePolicy::StaticSplit),
    );
    for penalty in [0.0, 20.0] {
        println!("switch penalty {penalty} ms");
        for &b in &baselines {
            let rep = evaluate_scenario(&p, &trace, b, true, penalty)?;
            println!(
                "  {:<12} G = {:.4}  ({} switches)",
                b.to_string(),
                rep.gain,
                rep.switch_count
            );
        }
    }
    Ok(())
}

//! Per-cell relative gain over a static split, as CSV on stdout.
//!
//! cargo run --example gain_map [-- <split layer>]

use splitwise::decision::{candidate_strategies, default_rates_bps};
use splitwise::profile::fixtures;
use splitwise::scenario::{gain_map, BaselinePolicy};

fn main() -> splitwise::Result<()> {
    let p = fixtures::vgg16_blocks();
    let layer = match std::env::args().nth(1) {
        Some(s) => s
            .parse()
            .map_err(|_| splitwise::Error::Argument(format!("bad layer `{s}`")))?,
        None => candidate_strategies(&p, true)
            .iter()
            .find_map(|s| s.split_layer())
            .expect("profile has a bottleneck"),
    };
    let map = gain_map(
        &p,
        BaselinePolicy::StaticSplit(layer),
        p.measured_batches(),
        &default_rates_bps(),
    )?;
    map.write_csv(std::io::stdout().lock())?;
    let best = map.cells.iter().map(|c| c.gain).fold(0.0, f64::max);
    eprintln!("largest gain over static:{layer}: {:.1}%", best * 100.0);
    Ok(())
}

//! Run the server and device agents on loopback and compare measured
//! latencies with the model.
//!
//! cargo run --example loopback_harness

use splitwise::decision::ChannelState;
use splitwise::net::{run_device, Server};
use splitwise::profile::fixtures;
use splitwise::Scenario;

fn main() -> splitwise::Result<()> {
    let p = fixtures::toy3_scaled();
    let server = Server::bind("127.0.0.1:0", p.clone())?.spawn()?;
    let scenario = Scenario::from_states([
        ChannelState::new(1, 1e6)?,
        ChannelState::new(1, 4e6)?,
        ChannelState::new(1, 16e6)?,
        ChannelState::new(1, 64e6)?,
    ]);
    let report = run_device(server.addr, &p, &scenario, true)?;
    println!("profile {}", report.profile_hash);
    for r in &report.records {
        println!(
            "req {} rate {:>5} MBps {:<14} predicted {:>8.2} ms measured {:>8.2} ms {}",
            r.req_id,
            r.rate_bps / 1e6,
            r.strategy.map(|s| s.to_string()).unwrap_or_default(),
            r.predicted_ms.unwrap_or(f64::NAN),
            r.measured_ms.unwrap_or(f64::NAN),
            r.status
        );
    }
    server.stop()
}

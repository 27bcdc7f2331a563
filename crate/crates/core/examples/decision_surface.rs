//! Optimal strategy per (batch, rate) cell, printed as a grid.
//!
//! cargo run --example decision_surface

use splitwise::decision::{decision_surface, default_batches, default_rates_bps, Strategy};
use splitwise::profile::{generate_synthetic_profile, RatioPattern, SyntheticSpec};

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
    .with_batches(default_batches());
    let p = generate_synthetic_profile(&spec)?;
    let rates = default_rates_bps();
    let surface = decision_surface(&p, &default_batches(), &rates, true)?;

    print!("batch\\MBps");
    for r in &rates {
        print!("{:>8}", r / 1e6);
    }
    println!();
    for &b in &surface.batches {
        print!("{b:>10}");
        for &r in &rates {
            let label = match surface.cell(b, r).unwrap().strategy {
                Strategy::FullOffload => "full".to_string(),
                Strategy::NoOffload => "local".to_string(),
                Strategy::SplitAt(j) => format!("@{j}"),
            };
            print!("{label:>8}");
        }
        println!();
    }
    surface.write_csv(std::io::sink())?;
    Ok(())
}

//! Generate a synthetic profile and write it as canonical JSON.
//!
//! cargo run --example synthetic_profile [-- out.json]

use splitwise::profile::{
    compression_ratios, compressive_set, generate_synthetic_profile, RatioPattern, SyntheticSpec,
};

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

    println!("compressive set: {:?}", compressive_set(&compression_ratios(&p)));
    println!("hash: {:016x}", p.canonical_hash());
    match std::env::args().nth(1) {
        Some(path) => {
            std::fs::write(&path, p.to_canonical_json()).map_err(|e| splitwise::Error::Argument(e.to_string()))?;
            println!("wrote {path}");
        }
        None => println!("{}", p.to_canonical_json()),
    }
    Ok(())
}

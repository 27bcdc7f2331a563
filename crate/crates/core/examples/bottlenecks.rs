//! Compression ratios and bottlenecks of a profile.
//!
//! cargo run --example bottlenecks [-- path/to/profile.json]

use splitwise::profile::{self, fixtures, load_profile_file};

fn main() -> splitwise::Result<()> {
    let p = match std::env::args().nth(1) {
        Some(path) => load_profile_file(path)?,
        None => fixtures::vgg16_blocks(),
    };
    let report = profile::bottleneck_report(&p);
    println!(
        "{} ({} layers, input {} B/sample)",
        p.name(),
        p.depth(),
        p.input_bytes_per_sample()
    );
    for (i, layer) in p.layers().iter().enumerate() {
        let j = i + 1;
        let mark = match (report.natural.contains(&j), report.compressive.contains(&j)) {
            (_, true) => "compressive",
            (true, false) => "natural",
            _ => "",
        };
        println!(
            "{j:>3} {:<16} {:>10} B  c={:<8.4} {mark}",
            layer.name, layer.output_bytes_per_sample, report.ratios[i]
        );
    }
    println!("natural: {:?}", report.natural);
    println!("compressive: {:?}", report.compressive);
    Ok(())
}

//! Test-only oracles. Everything here is computed directly from the profile
//! fields, without going through the crate's prefix sums or candidate lists.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitwise::decision::{ChannelState, LatencyBreakdown, Strategy};
use splitwise::profile::{LayerRecord, ModelProfile};

pub const GRID_BATCHES: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

pub fn grid_rates_bps() -> Vec<f64> {
    (0..8).map(|k| f64::from(1u32 << k) * 1e6).collect()
}

/// `{j : c_j < 1 and c_j < c_i for all i < j}` by direct double loop.
pub fn brute_compressive(ratios: &[f64]) -> Vec<usize> {
    (0..ratios.len())
        .filter(|&j| ratios[j] < 1.0 && (0..j).all(|i| ratios[j] < ratios[i]))
        .map(|j| j + 1)
        .collect()
}

pub fn brute_ratios(p: &ModelProfile) -> Vec<f64> {
    p.layers()
        .iter()
        .map(|l| l.output_bytes_per_sample as f64 / p.input_bytes_per_sample() as f64)
        .collect()
}

/// Latency by summing the layer tables for the head and tail ranges.
pub fn brute_latency(p: &ModelProfile, s: Strategy, cs: ChannelState) -> LatencyBreakdown {
    let b = cs.batch;
    let layers = p.layers();
    let device = |range: std::ops::Range<usize>| layers[range].iter().map(|l| l.device_ms[&b]).sum::<f64>();
    let server = |range: std::ops::Range<usize>| layers[range].iter().map(|l| l.server_ms[&b]).sum::<f64>();
    let depth = layers.len();
    let (head, per_sample, tail) = match s {
        Strategy::FullOffload => (0.0, p.input_bytes_per_sample(), server(0..depth)),
        Strategy::SplitAt(j) => (device(0..j), layers[j - 1].output_bytes_per_sample, server(j..depth)),
        Strategy::NoOffload => (device(0..depth), 0, 0.0),
    };
    let payload = u64::from(b) * per_sample;
    let transmit = payload as f64 / cs.rate_bps * 1000.0;
    LatencyBreakdown {
        head_ms: head,
        transmit_ms: transmit,
        tail_ms: tail,
        total_ms: head + transmit + tail,
        payload_bytes: payload,
    }
}

/// Every strategy the model admits: full offload, a split after each layer
/// except the last, and no offload.
pub fn all_strategies(depth: usize, allow_full_offload: bool) -> Vec<Strategy> {
    let mut v = Vec::new();
    if allow_full_offload {
        v.push(Strategy::FullOffload);
    }
    v.extend((1..depth).map(Strategy::SplitAt));
    v.push(Strategy::NoOffload);
    v
}

/// Brute-force candidate list: compressive splits below L plus the endpoints.
pub fn brute_candidates(p: &ModelProfile, allow_full_offload: bool) -> Vec<Strategy> {
    let depth = p.depth();
    let compressive = brute_compressive(&brute_ratios(p));
    all_strategies(depth, allow_full_offload)
        .into_iter()
        .filter(|s| match s {
            Strategy::SplitAt(j) => compressive.contains(j),
            _ => true,
        })
        .collect()
}

/// Exhaustive argmin with the documented tie rule: totals within 1e-9
/// relative of the minimum tie; prefer smaller payload, then splits by
/// layer, then no offload, then full offload.
pub fn brute_argmin(p: &ModelProfile, candidates: &[Strategy], cs: ChannelState) -> (Strategy, LatencyBreakdown) {
    let evaluated: Vec<(Strategy, LatencyBreakdown)> =
        candidates.iter().map(|&s| (s, brute_latency(p, s, cs))).collect();
    let min = evaluated.iter().map(|(_, l)| l.total_ms).fold(f64::INFINITY, f64::min);
    let order = |s: &Strategy| match s {
        Strategy::SplitAt(j) => *j,
        Strategy::NoOffload => p.depth(),
        Strategy::FullOffload => p.depth() + 1,
    };
    evaluated
        .into_iter()
        .filter(|(_, l)| l.total_ms - min <= 1e-9 * min.abs())
        .min_by_key(|(s, l)| (l.payload_bytes, order(s)))
        .unwrap()
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

/// Random profile with quantized sizes and timings, so equal ratios and
/// latency ties actually occur.
pub fn random_profile(rng: &mut ChaCha8Rng, max_layers: usize, batches: &[u32]) -> ModelProfile {
    let depth = rng.gen_range(1..=max_layers);
    let input: u64 = rng.gen_range(1..=64) * 1000;
    let layers = (0..depth)
        .map(|i| {
            // ratios in {0.05, 0.10, ..., 2.0}
            let ratio_steps: u64 = rng.gen_range(1..=40);
            let out = input * ratio_steps / 20;
            let mut device_ms = BTreeMap::new();
            let mut server_ms = BTreeMap::new();
            let base_device = f64::from(rng.gen_range(0..=40u32)) * 0.5;
            let speedup = f64::from(rng.gen_range(1..=8u32));
            for &b in batches {
                let exp: f64 = rng.gen_range(0.5..=1.0);
                let d = (base_device * f64::from(b).powf(exp) * 4.0).round() / 4.0;
                device_ms.insert(b, d);
                server_ms.insert(b, (d / speedup * 4.0).round() / 4.0);
            }
            LayerRecord {
                name: format!("l{i}"),
                output_bytes_per_sample: out.max(1),
                device_ms,
                server_ms,
            }
        })
        .collect();
    ModelProfile::new("random", input, layers).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

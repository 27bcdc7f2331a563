//! Seeded synthetic profiles for tests and experiments without real models.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerRecord, ModelProfile};
use crate::error::{Error, Result};

/// How per-layer compression ratios are laid out.
#[derive(Debug, Clone, PartialEq)]
pub enum RatioPattern {
    Constant(f64),
    /// One ratio per layer.
    Explicit(Vec<f64>),
    /// Geometric interpolation from `start` to `end`, each layer multiplied by
    /// a random factor in `[1 - jitter, 1 + jitter]`.
    MonotoneDecay {
        start: f64,
        end: f64,
        jitter: f64,
    },
    /// Layers are divided evenly into one stage per level. Each stage opens at
    /// its level and its remaining layers sit above it by up to `expansion`
    /// (relative). With strictly decreasing levels, every level below 1 yields
    /// exactly one compressive bottleneck.
    Stages {
        levels: Vec<f64>,
        expansion: f64,
    },
}

/// How per-layer timings are drawn.
///
/// Device time for layer `l` at batch `B` is `w_l * B^batch_exponent` with
/// `w_l` uniform in `device_ms_range`; the server is `server_speedup` times
/// faster. Both get an independent multiplicative jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingPattern {
    pub device_ms_range: (f64, f64),
    pub server_speedup: f64,
    pub batch_exponent: f64,
    pub jitter: f64,
}

impl Default for TimingPattern {
    fn default() -> Self {
        TimingPattern {
            device_ms_range: (0.5, 3.0),
            server_speedup: 6.0,
            batch_exponent: 0.9,
            jitter: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub name: String,
    pub layers: usize,
    pub input_bytes_per_sample: u64,
    pub ratios: RatioPattern,
    pub timing: TimingPattern,
    pub batches: Vec<u32>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 224x224x3 8-bit input, default timings, batch 1 only.
    pub fn new(layers: usize, ratios: RatioPattern, seed: u64) -> Self {
        SyntheticSpec {
            name: format!("synthetic-{seed}"),
            layers,
            input_bytes_per_sample: 224 * 224 * 3,
            ratios,
            timing: TimingPattern::default(),
            batches: vec![1],
            seed,
        }
    }

    pub fn with_batches(mut self, batches: impl Into<Vec<u32>>) -> Self {
        self.batches = batches.into();
        self
    }

    pub fn with_timing(mut self, timing: TimingPattern) -> Self {
        self.timing = timing;
        self
    }

    pub fn with_input_bytes(mut self, bytes: u64) -> Self {
        self.input_bytes_per_sample = bytes;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Generator(msg));
        if self.layers == 0 {
            return bad("layer count must be at least 1".into());
        }
        if self.input_bytes_per_sample == 0 {
            return bad("input size must be at least 1 byte".into());
        }
        if self.batches.is_empty() || self.batches.contains(&0) {
            return bad(format!(
                "batch list must be nonempty and positive, got {:?}",
                self.batches
            ));
        }
        let t = &self.timing;
        let (lo, hi) = t.device_ms_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return bad(format!("device_ms_range {lo}..{hi} is not a valid nonnegative range"));
        }
        if !(t.server_speedup.is_finite() && t.server_speedup > 0.0) {
            return bad(format!("server_speedup must be positive, got {}", t.server_speedup));
        }
        if !t.batch_exponent.is_finite() || !(0.0..1.0).contains(&t.jitter) {
            return bad("batch_exponent must be finite and jitter in [0, 1)".into());
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        match &self.ratios {
            RatioPattern::Constant(c) if !positive(*c) => bad(format!("ratio {c} must be positive")),
            RatioPattern::Explicit(v) if v.len() != self.layers => {
                bad(format!("{} explicit ratios for {} layers", v.len(), self.layers))
            }
            RatioPattern::Explicit(v) if !v.iter().all(|&c| positive(c)) => {
                bad("explicit ratios must be positive".into())
            }
            RatioPattern::MonotoneDecay { start, end, jitter } => {
                if !(positive(*start) && positive(*end) && (0.0..1.0).contains(jitter)) {
                    return bad("decay needs positive start/end and jitter in [0, 1)".into());
                }
                Ok(())
            }
            RatioPattern::Stages { levels, expansion } => {
                if levels.is_empty() || levels.len() > self.layers {
                    return bad(format!("{} stages do not fit {} layers", levels.len(), self.layers));
                }
                if !levels.iter().all(|&c| positive(c)) || !levels.windows(2).all(|w| w[1] < w[0]) {
                    return bad("stage levels must be positive and strictly decreasing".into());
                }
                if !(expansion.is_finite() && *expansion >= 0.0) {
                    return bad("stage expansion must be nonnegative".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Builds a profile from `spec`. The same spec always yields the same profile.
pub fn generate_synthetic_profile(spec: &SyntheticSpec) -> Result<ModelProfile> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.layers;

    let ratios: Vec<f64> = match &spec.ratios {
        RatioPattern::Constant(c) => vec![*c; n],
        RatioPattern::Explicit(v) => v.clone(),
        RatioPattern::MonotoneDecay { start, end, jitter } => (0..n)
            .map(|i| {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                let base = start * (end / start).powf(t);
                base * (1.0 + rng.gen_range(-jitter..=*jitter))
            })
            .collect(),
        RatioPattern::Stages { levels, expansion } => {
            let stages = levels.len();
            (0..n)
                .map(|i| {
                    let stage = i * stages / n;
                    let opens = i == 0 || (i - 1) * stages / n != stage;
                    let level = levels[stage];
                    if opens {
                        level
                    } else {
                        level * (1.0 + expansion * rng.gen_range(0.0..=1.0))
                    }
                })
                .collect()
        }
    };

    let mut batches = spec.batches.clone();
    batches.sort_unstable();
    batches.dedup();

    let t = &spec.timing;
    let input = spec.input_bytes_per_sample;
    let layers = ratios
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let weight = rng.gen_range(t.device_ms_range.0..=t.device_ms_range.1);
            let mut device_ms = BTreeMap::new();
            let mut server_ms = BTreeMap::new();
            for &b in &batches {
                let scale = f64::from(b).powf(t.batch_exponent);
                let device = weight * scale * (1.0 + rng.gen_range(-t.jitter..=t.jitter));
                let server = weight * scale / t.server_speedup * (1.0 + rng.gen_range(-t.jitter..=t.jitter));
                device_ms.insert(b, device);
                server_ms.insert(b, server);
            }
            LayerRecord {
                name: format!("block{}", i + 1),
                output_bytes_per_sample: ((ratio * input as f64).round() as u64).max(1),
                device_ms,
                server_ms,
            }
        })
        .collect();

    ModelProfile::new(spec.name.clone(), input, layers)
}

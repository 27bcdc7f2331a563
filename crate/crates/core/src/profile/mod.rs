//! Model profiles and bottleneck analysis.
//!
//! A [`ModelProfile`] describes a network as an ordered list of layers, each
//! with the size of its output per sample and per-batch compute times on the
//! device and on the server. The layers themselves are never executed here;
//! only their costs and output sizes matter.
//!
//! Layer indices are 1-based throughout the crate. Index 0 stands for the raw
//! input (full offloading).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub mod fixtures;
pub mod synthetic;

pub use synthetic::{generate_synthetic_profile, RatioPattern, SyntheticSpec, TimingPattern};

/// One layer of a profiled network.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    /// Bytes of this layer's output for a single sample.
    pub output_bytes_per_sample: u64,
    /// Device compute time in milliseconds, keyed by batch size.
    pub device_ms: BTreeMap<u32, f64>,
    /// Server compute time in milliseconds, keyed by batch size.
    pub server_ms: BTreeMap<u32, f64>,
}

/// A validated, immutable per-layer profile of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    name: String,
    input_bytes_per_sample: u64,
    layers: Vec<LayerRecord>,
    measured_batches: Vec<u32>,
}

impl ModelProfile {
    /// Validates the parts and builds a profile.
    ///
    /// Every layer must carry timings for the same batch sizes on both the
    /// device and the server. Batch sizes are never inferred from neighbours
    /// at load time.
    pub fn new(name: impl Into<String>, input_bytes_per_sample: u64, layers: Vec<LayerRecord>) -> Result<Self> {
        if input_bytes_per_sample == 0 {
            return Err(Error::profile(
                None,
                "input_bytes_per_sample",
                "must be at least 1 byte",
            ));
        }
        let Some(first) = layers.first() else {
            return Err(Error::profile(None, "layers", "layers nonempty: profile has no layers"));
        };
        let measured_batches: Vec<u32> = first.device_ms.keys().copied().collect();
        if measured_batches.is_empty() {
            return Err(Error::profile(
                Some(&first.name),
                "device_ms",
                "no batch sizes measured",
            ));
        }
        for layer in &layers {
            let name = Some(layer.name.as_str());
            if layer.output_bytes_per_sample == 0 {
                return Err(Error::profile(
                    name,
                    "output_bytes_per_sample",
                    "must be at least 1 byte",
                ));
            }
            for (field, map) in [("device_ms", &layer.device_ms), ("server_ms", &layer.server_ms)] {
                if !map.keys().copied().eq(measured_batches.iter().copied()) {
                    return Err(Error::profile(
                        name,
                        field,
                        format!(
                            "inconsistent batch keys: expected {:?}, found {:?}",
                            measured_batches,
                            map.keys().collect::<Vec<_>>()
                        ),
                    ));
                }
                if let Some((&b, &ms)) = map.iter().find(|(&b, &ms)| b == 0 || !ms.is_finite() || ms < 0.0) {
                    let message = if b == 0 {
                        "batch size 0 is not allowed".to_string()
                    } else {
                        format!("negative or non-finite duration {ms} for batch {b}")
                    };
                    return Err(Error::profile(name, field, message));
                }
            }
        }
        Ok(ModelProfile {
            name: name.into(),
            input_bytes_per_sample,
            layers,
            measured_batches,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_bytes_per_sample(&self) -> u64 {
        self.input_bytes_per_sample
    }

    pub fn layers(&self) -> &[LayerRecord] {
        &self.layers
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Layer by 1-based index.
    pub fn layer(&self, index: usize) -> Option<&LayerRecord> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    /// Sorted batch sizes for which every layer has timings.
    pub fn measured_batches(&self) -> &[u32] {
        &self.measured_batches
    }

    pub fn is_measured(&self, batch: u32) -> bool {
        self.measured_batches.binary_search(&batch).is_ok()
    }

    /// Closest measured batch sizes below and above `batch`.
    pub fn nearest_measured(&self, batch: u32) -> (Option<u32>, Option<u32>) {
        let pos = self.measured_batches.partition_point(|&b| b < batch);
        let lower = pos.checked_sub(1).map(|i| self.measured_batches[i]);
        let upper = self.measured_batches.get(pos).copied();
        (lower, upper)
    }

    pub(crate) fn unmeasured(&self, batch: u32) -> Error {
        let (lower, upper) = self.nearest_measured(batch);
        Error::UnmeasuredBatch { batch, lower, upper }
    }

    /// Returns a copy with every duration multiplied by `factor`.
    pub fn scale_durations(&self, factor: f64) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerRecord {
                name: l.name.clone(),
                output_bytes_per_sample: l.output_bytes_per_sample,
                device_ms: l.device_ms.iter().map(|(&b, &ms)| (b, ms * factor)).collect(),
                server_ms: l.server_ms.iter().map(|(&b, &ms)| (b, ms * factor)).collect(),
            })
            .collect();
        ModelProfile::new(self.name.clone(), self.input_bytes_per_sample, layers)
    }

    /// Parses and validates a profile from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawProfile = serde_json::from_str(text)?;
        raw.into_profile()
    }

    /// Canonical JSON: sorted keys, no whitespace, shortest round-trip floats.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(&self.to_value()).expect("profile values are always serializable")
    }

    /// FNV-1a 64 over the canonical JSON bytes.
    pub fn canonical_hash(&self) -> u64 {
        fnv1a64(self.to_canonical_json().as_bytes())
    }

    fn to_value(&self) -> Value {
        fn timings(map: &BTreeMap<u32, f64>) -> Value {
            Value::Object(map.iter().map(|(b, &ms)| (b.to_string(), Value::from(ms))).collect())
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let mut obj = Map::new();
                obj.insert("name".into(), Value::from(l.name.clone()));
                obj.insert("output_bytes_per_sample".into(), Value::from(l.output_bytes_per_sample));
                obj.insert("device_ms".into(), timings(&l.device_ms));
                obj.insert("server_ms".into(), timings(&l.server_ms));
                Value::Object(obj)
            })
            .collect();
        let mut obj = Map::new();
        obj.insert("name".into(), Value::from(self.name.clone()));
        obj.insert(
            "input_bytes_per_sample".into(),
            Value::from(self.input_bytes_per_sample),
        );
        obj.insert("layers".into(), Value::Array(layers));
        Value::Object(obj)
    }
}

/// Reads a profile from any byte stream.
pub fn load_profile<R: Read>(mut source: R) -> Result<ModelProfile> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| {
        if e.kind() == std::io::ErrorKind::InvalidData {
            Error::profile(None, "file", "not valid UTF-8")
        } else {
            Error::Network(e)
        }
    })?;
    ModelProfile::from_json_str(&text)
}

pub fn load_profile_file(path: impl AsRef<Path>) -> Result<ModelProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::profile(None, "file", format!("cannot read {}: {e}", path.display())))?;
    ModelProfile::from_json_str(&text)
}

/// Re-renders arbitrary JSON text in canonical form (sorted keys, compact).
pub fn canonicalize_json(text: &str) -> Result<String> {
    let value: Value = serde_json::from_str(text)?;
    Ok(serde_json::to_string(&value)?)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[derive(Deserialize)]
struct RawLayer {
    name: String,
    output_bytes_per_sample: i64,
    device_ms: BTreeMap<String, f64>,
    server_ms: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct RawProfile {
    name: String,
    input_bytes_per_sample: i64,
    layers: Vec<RawLayer>,
}

impl RawProfile {
    fn into_profile(self) -> Result<ModelProfile> {
        if self.input_bytes_per_sample < 1 {
            return Err(Error::profile(
                None,
                "input_bytes_per_sample",
                format!("nonpositive size {}", self.input_bytes_per_sample),
            ));
        }
        let layers = self
            .layers
            .into_iter()
            .map(|raw| {
                let name = Some(raw.name.as_str());
                if raw.output_bytes_per_sample < 1 {
                    return Err(Error::profile(
                        name,
                        "output_bytes_per_sample",
                        format!("nonpositive size {}", raw.output_bytes_per_sample),
                    ));
                }
                let device_ms = parse_timings(name, "device_ms", raw.device_ms)?;
                let server_ms = parse_timings(name, "server_ms", raw.server_ms)?;
                Ok(LayerRecord {
                    output_bytes_per_sample: raw.output_bytes_per_sample as u64,
                    name: raw.name,
                    device_ms,
                    server_ms,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelProfile::new(self.name, self.input_bytes_per_sample as u64, layers)
    }
}

fn parse_timings(layer: Option<&str>, field: &'static str, raw: BTreeMap<String, f64>) -> Result<BTreeMap<u32, f64>> {
    raw.into_iter()
        .map(|(key, ms)| {
            let batch = key
                .parse::<u32>()
                .ok()
                .filter(|b| *b >= 1 && b.to_string() == key)
                .ok_or_else(|| {
                    Error::profile(
                        layer,
                        field,
                        format!("batch key `{key}` is not a positive base-10 integer"),
                    )
                })?;
            if ms < 0.0 {
                return Err(Error::profile(
                    layer,
                    field,
                    format!("negative duration {ms} for batch {batch}"),
                ));
            }
            Ok((batch, ms))
        })
        .collect()
}

/// Per-layer compression ratios and the bottlenecks derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckReport {
    pub ratios: Vec<f64>,
    /// 1-based indices of layers with ratio below 1.
    pub natural: Vec<usize>,
    /// 1-based indices of compressive bottlenecks, increasing.
    pub compressive: Vec<usize>,
}

/// `c_l = |h_l| / |x|` per layer. Batch-invariant, since batch scales both sides.
pub fn compression_ratios(profile: &ModelProfile) -> Vec<f64> {
    let input = profile.input_bytes_per_sample as f64;
    profile
        .layers
        .iter()
        .map(|l| l.output_bytes_per_sample as f64 / input)
        .collect()
}

/// Indices (1-based) whose output is strictly smaller than the input.
pub fn natural_bottlenecks(ratios: &[f64]) -> Vec<usize> {
    ratios
        .iter()
        .enumerate()
        .filter(|(_, &c)| c < 1.0)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Natural bottlenecks whose ratio is strictly below that of every earlier layer.
///
/// Of two splits with equal ratio the earlier one is never slower when the
/// server outpaces the device, so only new running minima are kept.
pub fn compressive_set(ratios: &[f64]) -> Vec<usize> {
    let mut best = 1.0_f64;
    let mut out = Vec::new();
    for (i, &c) in ratios.iter().enumerate() {
        if c < best {
            out.push(i + 1);
        }
        best = best.min(c);
    }
    out
}

pub fn bottleneck_report(profile: &ModelProfile) -> BottleneckReport {
    let ratios = compression_ratios(profile);
    BottleneckReport {
        natural: natural_bottlenecks(&ratios),
        compressive: compressive_set(&ratios),
        ratios,
    }
}

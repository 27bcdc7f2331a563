//! End-to-end latency of each offloading strategy and selection of the
//! latency-optimal split.
//!
//! Latency is modelled as strictly sequential: the device runs the head, the
//! intermediate representation crosses the channel, and the server runs the
//! tail. For a split after layer `l` at batch `B` and rate `r`:
//!
//! ```text
//! total = sum(device_ms[1..=l]) + B * |h_l| / r + sum(server_ms[l+1..=L])
//! ```
//!
//! Full offloading transmits the raw input and runs every layer on the
//! server; no offloading runs every layer on the device and transmits nothing.
//! The result returned from server to device is not modelled for any strategy.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{compression_ratios, compressive_set, ModelProfile};

/// Relative tolerance under which two totals count as tied.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Batch size and channel data rate at one point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub batch: u32,
    /// Bytes per second.
    pub rate_bps: f64,
}

impl ChannelState {
    pub fn new(batch: u32, rate_bps: f64) -> Result<Self> {
        let state = ChannelState { batch, rate_bps };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidState("batch size must be at least 1".into()));
        }
        if !(self.rate_bps.is_finite() && self.rate_bps > 0.0) {
            return Err(Error::InvalidState(format!(
                "data rate must be positive and finite, got {}",
                self.rate_bps
            )));
        }
        Ok(())
    }
}

/// One offloading choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Send the raw input; the server runs every layer.
    FullOffload,
    /// Run layers `1..=j` on the device and send layer `j`'s output.
    SplitAt(usize),
    /// Run every layer on the device.
    NoOffload,
}

impl Strategy {
    /// Name used in CSV/JSON output.
    pub fn kind(&self) -> &'static str {
        match self {
            Strategy::FullOffload => "full_offload",
            Strategy::SplitAt(_) => "split",
            Strategy::NoOffload => "no_offload",
        }
    }

    pub fn split_layer(&self) -> Option<usize> {
        match *self {
            Strategy::SplitAt(j) => Some(j),
            _ => None,
        }
    }

    /// Builds a strategy from its output name and optional split layer.
    pub fn from_parts(kind: &str, split_layer: Option<usize>) -> Result<Self> {
        match (kind, split_layer) {
            ("full_offload", None) => Ok(Strategy::FullOffload),
            ("no_offload", None) => Ok(Strategy::NoOffload),
            ("split", Some(j)) => Ok(Strategy::SplitAt(j)),
            _ => Err(Error::InvalidStrategy(format!(
                "{kind} with split layer {split_layer:?}"
            ))),
        }
    }

    /// Checks that the strategy can be evaluated on `profile`.
    pub fn validate_for(&self, profile: &ModelProfile) -> Result<()> {
        match *self {
            Strategy::SplitAt(j) if j == 0 || j >= profile.depth() => Err(Error::InvalidStrategy(format!(
                "split layer {j} outside 1..{} for a {}-layer profile",
                profile.depth(),
                profile.depth()
            ))),
            _ => Ok(()),
        }
    }

    /// Tie-break position: splits by layer, then no offloading, full offloading last.
    fn rank(&self, depth: usize) -> usize {
        match *self {
            Strategy::SplitAt(j) => j,
            Strategy::NoOffload => depth,
            Strategy::FullOffload => depth + 1,
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Parses `full_offload`, `no_offload` or `split@<layer>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_offload" => Ok(Strategy::FullOffload),
            "no_offload" => Ok(Strategy::NoOffload),
            _ => s
                .strip_prefix("split@")
                .and_then(|j| j.parse().ok())
                .map(Strategy::SplitAt)
                .ok_or_else(|| Error::InvalidStrategy(format!("cannot parse strategy `{s}`"))),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::SplitAt(j) => write!(f, "split@{j}"),
            other => f.write_str(other.kind()),
        }
    }
}

/// Per-component latency of one strategy at one channel state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub head_ms: f64,
    pub transmit_ms: f64,
    pub tail_ms: f64,
    pub total_ms: f64,
    pub payload_bytes: u64,
}

impl LatencyBreakdown {
    fn new(head_ms: f64, payload_bytes: u64, tail_ms: f64, rate_bps: f64) -> Self {
        let transmit_ms = payload_bytes as f64 * 1000.0 / rate_bps;
        LatencyBreakdown {
            head_ms,
            transmit_ms,
            tail_ms,
            total_ms: head_ms + transmit_ms + tail_ms,
            payload_bytes,
        }
    }
}

/// Knobs beyond the plain argmin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionOptions {
    /// Include full offloading among the candidates. Off when raw inputs must
    /// not leave the device.
    pub allow_full_offload: bool,
    /// Search every layer instead of only compressive bottlenecks. Debugging aid.
    pub all_layers: bool,
    /// Linearly interpolate timings for batch sizes between measured ones
    /// instead of failing.
    pub interpolate: bool,
}

impl Default for DecisionOptions {
    fn default() -> Self {
        DecisionOptions {
            allow_full_offload: true,
            all_layers: false,
            interpolate: false,
        }
    }
}

impl DecisionOptions {
    pub fn restricted(allow_full_offload: bool) -> Self {
        DecisionOptions {
            allow_full_offload,
            ..Default::default()
        }
    }
}

/// `[FullOffload?] ++ [SplitAt(j) for compressive j < L] ++ [NoOffload]`.
///
/// A compressive bottleneck at the last layer is covered by `NoOffload`.
pub fn candidate_strategies(profile: &ModelProfile, allow_full_offload: bool) -> Vec<Strategy> {
    candidates_with(profile, &DecisionOptions::restricted(allow_full_offload))
}

pub fn candidates_with(profile: &ModelProfile, opts: &DecisionOptions) -> Vec<Strategy> {
    let depth = profile.depth();
    let splits: Vec<usize> = if opts.all_layers {
        (1..depth).collect()
    } else {
        compressive_set(&compression_ratios(profile))
            .into_iter()
            .filter(|&j| j < depth)
            .collect()
    };
    let mut out = Vec::with_capacity(splits.len() + 2);
    if opts.allow_full_offload {
        out.push(Strategy::FullOffload);
    }
    out.extend(splits.into_iter().map(Strategy::SplitAt));
    out.push(Strategy::NoOffload);
    out
}

/// Cumulative head and tail times for one batch size.
#[derive(Debug, Clone)]
pub struct BatchTimings {
    batch: u32,
    /// `head[j]` = device time of layers `1..=j`.
    head: Vec<f64>,
    /// `tail[j]` = server time of layers `j+1..=L`.
    tail: Vec<f64>,
}

impl BatchTimings {
    /// Timings at a measured batch size.
    pub fn exact(profile: &ModelProfile, batch: u32) -> Result<Self> {
        if !profile.is_measured(batch) {
            return Err(profile.unmeasured(batch));
        }
        Ok(Self::from_layers(profile, batch, |l| {
            (l.device_ms[&batch], l.server_ms[&batch])
        }))
    }

    /// Timings at `batch`, interpolated piecewise-linearly between the
    /// neighbouring measured batch sizes. Batches outside the measured range
    /// are still an error.
    pub fn interpolated(profile: &ModelProfile, batch: u32) -> Result<Self> {
        if profile.is_measured(batch) {
            return Self::exact(profile, batch);
        }
        let (Some(lo), Some(hi)) = profile.nearest_measured(batch) else {
            return Err(profile.unmeasured(batch));
        };
        log::warn!("batch {batch} not measured; interpolating timings between batches {lo} and {hi}");
        let w = f64::from(batch - lo) / f64::from(hi - lo);
        let lerp = |a: f64, b: f64| a + (b - a) * w;
        Ok(Self::from_layers(profile, batch, |l| {
            (
                lerp(l.device_ms[&lo], l.device_ms[&hi]),
                lerp(l.server_ms[&lo], l.server_ms[&hi]),
            )
        }))
    }

    pub fn for_options(profile: &ModelProfile, batch: u32, opts: &DecisionOptions) -> Result<Self> {
        if opts.interpolate {
            Self::interpolated(profile, batch)
        } else {
            Self::exact(profile, batch)
        }
    }

    fn from_layers<F>(profile: &ModelProfile, batch: u32, per_layer: F) -> Self
    where
        F: Fn(&crate::profile::LayerRecord) -> (f64, f64),
    {
        let times: Vec<(f64, f64)> = profile.layers().iter().map(per_layer).collect();
        let depth = times.len();
        let mut head = vec![0.0; depth + 1];
        for (j, (device, _)) in times.iter().enumerate() {
            head[j + 1] = head[j] + device;
        }
        let mut tail = vec![0.0; depth + 1];
        for j in (0..depth).rev() {
            tail[j] = tail[j + 1] + times[j].1;
        }
        BatchTimings { batch, head, tail }
    }

    pub fn batch(&self) -> u32 {
        self.batch
    }

    /// Latency of `strategy` at `rate_bps`. The strategy must be valid for the profile.
    pub fn breakdown(&self, profile: &ModelProfile, strategy: Strategy, rate_bps: f64) -> LatencyBreakdown {
        let depth = profile.depth();
        let batch = u64::from(self.batch);
        let (head, per_sample, tail) = match strategy {
            Strategy::FullOffload => (0.0, profile.input_bytes_per_sample(), self.tail[0]),
            Strategy::SplitAt(j) => (
                self.head[j],
                profile.layers()[j - 1].output_bytes_per_sample,
                self.tail[j],
            ),
            Strategy::NoOffload => (self.head[depth], 0, 0.0),
        };
        LatencyBreakdown::new(head, batch * per_sample, tail, rate_bps)
    }
}

/// Latency of one strategy at one channel state. The batch must be measured.
pub fn split_time(profile: &ModelProfile, strategy: Strategy, state: ChannelState) -> Result<LatencyBreakdown> {
    state.validate()?;
    strategy.validate_for(profile)?;
    let timings = BatchTimings::exact(profile, state.batch)?;
    Ok(timings.breakdown(profile, strategy, state.rate_bps))
}

/// The argmin over candidates, with its breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub strategy: Strategy,
    pub latency: LatencyBreakdown,
}

/// Picks the lowest-total option. Totals within [`TIE_RELATIVE_TOLERANCE`] of
/// the minimum tie; ties go to the smaller payload, then the earlier split.
pub fn select_best<I>(depth: usize, options: I) -> Option<Decision>
where
    I: IntoIterator<Item = (Strategy, LatencyBreakdown)>,
{
    let options: Vec<(Strategy, LatencyBreakdown)> = options.into_iter().collect();
    let best = options.iter().map(|(_, l)| l.total_ms).fold(f64::INFINITY, f64::min);
    let tol = TIE_RELATIVE_TOLERANCE * best.abs();
    options
        .into_iter()
        .filter(|(_, l)| l.total_ms - best <= tol)
        .min_by_key(|(s, l)| (l.payload_bytes, s.rank(depth)))
        .map(|(strategy, latency)| Decision { strategy, latency })
}

fn decide(profile: &ModelProfile, timings: &BatchTimings, candidates: &[Strategy], rate_bps: f64) -> Decision {
    select_best(
        profile.depth(),
        candidates.iter().map(|&s| (s, timings.breakdown(profile, s, rate_bps))),
    )
    .expect("candidate list always contains NoOffload")
}

pub fn optimal_split(
    profile: &ModelProfile,
    state: ChannelState,
    allow_full_offload: bool,
) -> Result<(Strategy, LatencyBreakdown)> {
    let d = optimal_split_with(profile, state, &DecisionOptions::restricted(allow_full_offload))?;
    Ok((d.strategy, d.latency))
}

pub fn optimal_split_with(profile: &ModelProfile, state: ChannelState, opts: &DecisionOptions) -> Result<Decision> {
    state.validate()?;
    let timings = BatchTimings::for_options(profile, state.batch, opts)?;
    let candidates = candidates_with(profile, opts);
    Ok(decide(profile, &timings, &candidates, state.rate_bps))
}

/// One cell of a decision surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceCell {
    pub state: ChannelState,
    pub strategy: Strategy,
    pub latency: LatencyBreakdown,
}

/// Flat record used for CSV and JSON output of surface cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub batch: u32,
    pub rate_bps: f64,
    pub strategy: String,
    pub split_layer: Option<usize>,
    pub head_ms: f64,
    pub transmit_ms: f64,
    pub tail_ms: f64,
    pub total_ms: f64,
    pub payload_bytes: u64,
}

impl From<&SurfaceCell> for SurfaceRow {
    fn from(c: &SurfaceCell) -> Self {
        SurfaceRow {
            batch: c.state.batch,
            rate_bps: c.state.rate_bps,
            strategy: c.strategy.kind().to_string(),
            split_layer: c.strategy.split_layer(),
            head_ms: c.latency.head_ms,
            transmit_ms: c.latency.transmit_ms,
            tail_ms: c.latency.tail_ms,
            total_ms: c.latency.total_ms,
            payload_bytes: c.latency.payload_bytes,
        }
    }
}

impl TryFrom<SurfaceRow> for SurfaceCell {
    type Error = Error;

    fn try_from(r: SurfaceRow) -> Result<Self> {
        Ok(SurfaceCell {
            state: ChannelState {
                batch: r.batch,
                rate_bps: r.rate_bps,
            },
            strategy: Strategy::from_parts(&r.strategy, r.split_layer)?,
            latency: LatencyBreakdown {
                head_ms: r.head_ms,
                transmit_ms: r.transmit_ms,
                tail_ms: r.tail_ms,
                total_ms: r.total_ms,
                payload_bytes: r.payload_bytes,
            },
        })
    }
}

/// Optimal strategy over a (batch, rate) grid. Cells are batch-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SurfaceDoc", try_from = "SurfaceDoc")]
pub struct DecisionSurface {
    pub batches: Vec<u32>,
    pub rates_bps: Vec<f64>,
    pub cells: Vec<SurfaceCell>,
}

#[derive(Serialize, Deserialize)]
struct SurfaceDoc {
    batches: Vec<u32>,
    rates_bps: Vec<f64>,
    cells: Vec<SurfaceRow>,
}

impl From<DecisionSurface> for SurfaceDoc {
    fn from(s: DecisionSurface) -> Self {
        SurfaceDoc {
            cells: s.cells.iter().map(SurfaceRow::from).collect(),
            batches: s.batches,
            rates_bps: s.rates_bps,
        }
    }
}

impl TryFrom<SurfaceDoc> for DecisionSurface {
    type Error = Error;

    fn try_from(d: SurfaceDoc) -> Result<Self> {
        Ok(DecisionSurface {
            batches: d.batches,
            rates_bps: d.rates_bps,
            cells: d.cells.into_iter().map(SurfaceCell::try_from).collect::<Result<_>>()?,
        })
    }
}

impl DecisionSurface {
    pub fn cell(&self, batch: u32, rate_bps: f64) -> Option<&SurfaceCell> {
        let b = self.batches.iter().position(|&x| x == batch)?;
        let r = self.rates_bps.iter().position(|&x| x == rate_bps)?;
        self.cells.get(b * self.rates_bps.len() + r)
    }

    /// Distinct winning strategies, in first-seen order.
    pub fn distinct_strategies(&self) -> Vec<Strategy> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if !seen.contains(&c.strategy) {
                seen.push(c.strategy);
            }
        }
        seen
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(SurfaceRow::from(c))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("surface is serializable")
    }
}

/// Sorted, deduplicated copy of a grid axis.
fn sorted_axis<T: PartialOrd + Copy>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("axis values are comparable"));
    v.dedup_by(|a, b| a == b);
    v
}

pub fn decision_surface(
    profile: &ModelProfile,
    batches: &[u32],
    rates_bps: &[f64],
    allow_full_offload: bool,
) -> Result<DecisionSurface> {
    decision_surface_with(
        profile,
        batches,
        rates_bps,
        &DecisionOptions::restricted(allow_full_offload),
    )
}

pub fn decision_surface_with(
    profile: &ModelProfile,
    batches: &[u32],
    rates_bps: &[f64],
    opts: &DecisionOptions,
) -> Result<DecisionSurface> {
    if batches.is_empty() || rates_bps.is_empty() {
        return Err(Error::Argument(
            "surface grid needs at least one batch and one rate".into(),
        ));
    }
    for &r in rates_bps {
        ChannelState::new(1, r)?;
    }
    let batches = sorted_axis(batches);
    let rates_bps = sorted_axis(rates_bps);
    let candidates = candidates_with(profile, opts);
    let mut cells = Vec::with_capacity(batches.len() * rates_bps.len());
    for &batch in &batches {
        ChannelState::new(batch, 1.0)?;
        let timings = BatchTimings::for_options(profile, batch, opts)?;
        for &rate_bps in &rates_bps {
            let d = decide(profile, &timings, &candidates, rate_bps);
            cells.push(SurfaceCell {
                state: ChannelState { batch, rate_bps },
                strategy: d.strategy,
                latency: d.latency,
            });
        }
    }
    Ok(DecisionSurface {
        batches,
        rates_bps,
        cells,
    })
}

/// 1, 2, 4, ... up to and including `max` (when `max` is a power of two).
pub fn powers_of_two(min: u32, max: u32) -> Vec<u32> {
    std::iter::successors(Some(min.max(1)), |&b| b.checked_mul(2))
        .take_while(|&b| b <= max)
        .collect()
}

/// Rates 1..=128 MBps in x2 steps, in bytes per second.
pub fn default_rates_bps() -> Vec<f64> {
    powers_of_two(1, 128).into_iter().map(|m| f64::from(m) * 1e6).collect()
}

/// Batch sizes 1..=64 in x2 steps.
pub fn default_batches() -> Vec<u32> {
    powers_of_two(1, 64)
}

/// A data rate parsed from text such as `5000bps`, `20kbps` or `1MBps`.
///
/// Units are bytes per second with decimal prefixes; a bare number is bytes
/// per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate(pub f64);

impl FromStr for Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let (num, scale) = if let Some(n) = t.strip_suffix("mbps") {
            (n, 1e6)
        } else if let Some(n) = t.strip_suffix("kbps") {
            (n, 1e3)
        } else if let Some(n) = t.strip_suffix("bps") {
            (n, 1.0)
        } else {
            (t.as_str(), 1.0)
        };
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("cannot parse rate `{s}`")))?;
        let rate = value * scale;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Argument(format!("rate `{s}` must be positive")));
        }
        Ok(Rate(rate))
    }
}

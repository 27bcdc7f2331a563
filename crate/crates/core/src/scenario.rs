//! Scenario replay: dynamic split selection against fixed baselines.
//!
//! A scenario is a sequence of channel states. At each step the dynamic
//! policy re-runs the argmin for that state, while a baseline keeps one
//! strategy throughout. The relative average gain is
//!
//! ```text
//! G = 1/N * sum_i |T_dyn(B_i, r_i) - T_base(B_i, r_i)| / T_base(B_i, r_i)
//! ```
//!
//! Steps are independent; timestamps are carried along but never used.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::{candidate_strategies, candidates_with, BatchTimings, ChannelState, DecisionOptions, Strategy};
use crate::error::{Error, Result};
use crate::profile::ModelProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub batch: u32,
    pub rate_bps: f64,
    /// Informational timestamp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<f64>,
}

impl ScenarioStep {
    pub fn state(&self) -> ChannelState {
        ChannelState {
            batch: self.batch,
            rate_bps: self.rate_bps,
        }
    }
}

impl From<ChannelState> for ScenarioStep {
    fn from(s: ChannelState) -> Self {
        ScenarioStep {
            batch: s.batch,
            rate_bps: s.rate_bps,
            t_ms: None,
        }
    }
}

/// Ordered channel states. Serialized as a bare JSON array of steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scenario {
    pub steps: Vec<ScenarioStep>,
}

impl Scenario {
    pub fn from_states(states: impl IntoIterator<Item = ChannelState>) -> Self {
        Scenario {
            steps: states.into_iter().map(ScenarioStep::from).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = ChannelState> + '_ {
        self.steps.iter().map(ScenarioStep::state)
    }

    /// Parses a scenario file and checks each state. An empty array is accepted here;
    /// evaluation rejects it.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        for (i, step) in scenario.steps.iter().enumerate() {
            step.state()
                .validate()
                .map_err(|e| Error::Scenario(format!("step {i}: {e}")))?;
        }
        Ok(scenario)
    }

    pub fn load_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario is serializable")
    }
}

/// The fixed strategy a scenario is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselinePolicy {
    StaticSplit(usize),
    AlwaysFullOffload,
    AlwaysNoOffload,
}

impl BaselinePolicy {
    pub fn strategy(&self) -> Strategy {
        match *self {
            BaselinePolicy::StaticSplit(j) => Strategy::SplitAt(j),
            BaselinePolicy::AlwaysFullOffload => Strategy::FullOffload,
            BaselinePolicy::AlwaysNoOffload => Strategy::NoOffload,
        }
    }

    /// A static split must sit on one of the profile's candidate layers.
    pub fn validate_for(&self, profile: &ModelProfile) -> Result<()> {
        if let BaselinePolicy::StaticSplit(layer) = *self {
            let candidates: Vec<usize> = candidate_strategies(profile, true)
                .iter()
                .filter_map(Strategy::split_layer)
                .collect();
            if !candidates.contains(&layer) {
                return Err(Error::NotCandidate { layer, candidates });
            }
        }
        Ok(())
    }
}

impl FromStr for BaselinePolicy {
    type Err = Error;

    /// `static:<layer>`, `full` or `none`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(BaselinePolicy::AlwaysFullOffload),
            "none" => Ok(BaselinePolicy::AlwaysNoOffload),
            _ => s
                .strip_prefix("static:")
                .and_then(|l| l.parse().ok())
                .map(BaselinePolicy::StaticSplit)
                .ok_or_else(|| Error::Argument(format!("baseline `{s}` is not static:<layer>, full or none"))),
        }
    }
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselinePolicy::StaticSplit(j) => write!(f, "static:{j}"),
            BaselinePolicy::AlwaysFullOffload => f.write_str("full"),
            BaselinePolicy::AlwaysNoOffload => f.write_str("none"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub batch: u32,
    pub rate_bps: f64,
    pub dyn_strategy: Strategy,
    /// Dynamic latency including any switch penalty.
    pub dyn_ms: f64,
    pub base_ms: f64,
    pub step_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub baseline: String,
    pub per_step: Vec<StepRecord>,
    pub gain: f64,
    pub switch_count: usize,
}

impl ScenarioReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "batch",
            "rate_bps",
            "dyn_strategy",
            "dyn_ms",
            "base_ms",
            "step_gain",
        ])?;
        for r in &self.per_step {
            w.serialize((
                r.step,
                r.batch,
                r.rate_bps,
                r.dyn_strategy.to_string(),
                r.dyn_ms,
                r.base_ms,
                r.step_gain,
            ))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

/// `|dyn - base| / base`; zero when both latencies are zero.
pub fn relative_gain(dyn_ms: f64, base_ms: f64) -> f64 {
    let diff = (dyn_ms - base_ms).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / base_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptions {
    pub decision: DecisionOptions,
    /// Added to the dynamic latency whenever its strategy differs from the previous step's.
    pub switch_penalty_ms: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            decision: DecisionOptions::default(),
            switch_penalty_ms: 0.0,
        }
    }
}

pub fn evaluate_scenario(
    profile: &ModelProfile,
    scenario: &Scenario,
    baseline: BaselinePolicy,
    allow_full_offload: bool,
    switch_penalty_ms: f64,
) -> Result<ScenarioReport> {
    let opts = ScenarioOptions {
        decision: DecisionOptions::restricted(allow_full_offload),
        switch_penalty_ms,
    };
    evaluate_scenario_with(profile, scenario, baseline, &opts)
}

pub fn evaluate_scenario_with(
    profile: &ModelProfile,
    scenario: &Scenario,
    baseline: BaselinePolicy,
    opts: &ScenarioOptions,
) -> Result<ScenarioReport> {
    if scenario.is_empty() {
        return Err(Error::Scenario("scenario has no steps".into()));
    }
    if !(opts.switch_penalty_ms.is_finite() && opts.switch_penalty_ms >= 0.0) {
        return Err(Error::Argument(format!(
            "switch penalty must be a nonnegative number of ms, got {}",
            opts.switch_penalty_ms
        )));
    }
    baseline.validate_for(profile)?;
    let base_strategy = baseline.strategy();
    let candidates = candidates_with(profile, &opts.decision);

    let mut timings: HashMap<u32, BatchTimings> = HashMap::new();
    let mut per_step = Vec::with_capacity(scenario.len());
    let mut previous: Option<Strategy> = None;
    let mut switch_count = 0;
    for (step, state) in scenario.states().enumerate() {
        state.validate()?;
        let t = match timings.entry(state.batch) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(BatchTimings::for_options(profile, state.batch, &opts.decision)?)
            }
        };
        let decision = crate::decision::select_best(
            profile.depth(),
            candidates.iter().map(|&s| (s, t.breakdown(profile, s, state.rate_bps))),
        )
        .expect("candidate list always contains NoOffload");
        let base_ms = t.breakdown(profile, base_strategy, state.rate_bps).total_ms;

        let mut dyn_ms = decision.latency.total_ms;
        if previous.is_some_and(|p| p != decision.strategy) {
            switch_count += 1;
            dyn_ms += opts.switch_penalty_ms;
        }
        previous = Some(decision.strategy);

        per_step.push(StepRecord {
            step,
            batch: state.batch,
            rate_bps: state.rate_bps,
            dyn_strategy: decision.strategy,
            dyn_ms,
            base_ms,
            step_gain: relative_gain(dyn_ms, base_ms),
        });
    }
    let gain = per_step.iter().map(|r| r.step_gain).sum::<f64>() / per_step.len() as f64;
    Ok(ScenarioReport {
        baseline: baseline.to_string(),
        per_step,
        gain,
        switch_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCell {
    pub batch: u32,
    pub rate_bps: f64,
    pub dyn_strategy: Strategy,
    pub dyn_ms: f64,
    pub base_ms: f64,
    pub gain: f64,
}

/// Per-state relative gain of the dynamic choice over a baseline. Cells are batch-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMap {
    pub baseline: String,
    pub batches: Vec<u32>,
    pub rates_bps: Vec<f64>,
    pub cells: Vec<GainCell>,
}

impl GainMap {
    pub fn cell(&self, batch: u32, rate_bps: f64) -> Option<&GainCell> {
        let b = self.batches.iter().position(|&x| x == batch)?;
        let r = self.rates_bps.iter().position(|&x| x == rate_bps)?;
        self.cells.get(b * self.rates_bps.len() + r)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["batch", "rate_bps", "dyn_strategy", "dyn_ms", "base_ms", "gain"])?;
        for c in &self.cells {
            w.serialize((
                c.batch,
                c.rate_bps,
                c.dyn_strategy.to_string(),
                c.dyn_ms,
                c.base_ms,
                c.gain,
            ))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gain map is serializable")
    }
}

pub fn gain_map(
    profile: &ModelProfile,
    baseline: BaselinePolicy,
    batches: &[u32],
    rates_bps: &[f64],
) -> Result<GainMap> {
    gain_map_with(profile, baseline, batches, rates_bps, &DecisionOptions::default())
}

pub fn gain_map_with(
    profile: &ModelProfile,
    baseline: BaselinePolicy,
    batches: &[u32],
    rates_bps: &[f64],
    opts: &DecisionOptions,
) -> Result<GainMap> {
    baseline.validate_for(profile)?;
    let surface = crate::decision::decision_surface_with(profile, batches, rates_bps, opts)?;
    let base_strategy = baseline.strategy();
    let mut cells = Vec::with_capacity(surface.cells.len());
    let mut current: Option<BatchTimings> = None;
    for c in &surface.cells {
        if current.as_ref().map(BatchTimings::batch) != Some(c.state.batch) {
            current = Some(BatchTimings::for_options(profile, c.state.batch, opts)?);
        }
        let t = current.as_ref().expect("timings set above");
        let base_ms = t.breakdown(profile, base_strategy, c.state.rate_bps).total_ms;
        cells.push(GainCell {
            batch: c.state.batch,
            rate_bps: c.state.rate_bps,
            dyn_strategy: c.strategy,
            dyn_ms: c.latency.total_ms,
            base_ms,
            gain: relative_gain(c.latency.total_ms, base_ms),
        });
    }
    Ok(GainMap {
        baseline: baseline.to_string(),
        batches: surface.batches,
        rates_bps: surface.rates_bps,
        cells,
    })
}

/// Limits every generated state must respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceBounds {
    pub min_rate_bps: f64,
    pub max_rate_bps: f64,
    pub min_batch: u32,
    pub max_batch: u32,
}

impl Default for TraceBounds {
    /// 1 to 128 MBps, batch 1 to 64.
    fn default() -> Self {
        TraceBounds {
            min_rate_bps: 1e6,
            max_rate_bps: 128e6,
            min_batch: 1,
            max_batch: 64,
        }
    }
}

impl TraceBounds {
    fn check(&self, state: ChannelState, what: &str) -> Result<()> {
        let ok = (self.min_rate_bps..=self.max_rate_bps).contains(&state.rate_bps)
            && (self.min_batch..=self.max_batch).contains(&state.batch);
        if ok {
            Ok(())
        } else {
            Err(Error::Generator(format!(
                "{what} (batch {}, rate {} B/s) outside bounds {self:?}",
                state.batch, state.rate_bps
            )))
        }
    }
}

/// Shape of a generated trace.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSpec {
    /// `before` for steps `0..switch_at`, `after` from then on.
    Step {
        steps: usize,
        switch_at: usize,
        before: ChannelState,
        after: ChannelState,
    },
    /// Each step, with probability `p_move`, the rate is multiplied or divided
    /// by `factor` (equally likely) and clamped to the bounds. When
    /// `walk_batch` is set the batch size takes the same kind of walk
    /// independently.
    RandomWalk {
        steps: usize,
        start: ChannelState,
        factor: f64,
        p_move: f64,
        walk_batch: bool,
    },
    /// Batch sizes cycle through `batches` at a fixed rate.
    Sawtooth {
        steps: usize,
        batches: Vec<u32>,
        rate_bps: f64,
    },
}

pub fn generate_trace(spec: &TraceSpec, bounds: &TraceBounds, seed: u64) -> Result<Scenario> {
    if !(bounds.min_rate_bps > 0.0 && bounds.min_rate_bps <= bounds.max_rate_bps)
        || !(bounds.min_batch >= 1 && bounds.min_batch <= bounds.max_batch)
    {
        return Err(Error::Generator(format!("invalid bounds {bounds:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<ChannelState> = match spec {
        TraceSpec::Step {
            steps,
            switch_at,
            before,
            after,
        } => {
            if switch_at > steps {
                return Err(Error::Generator(format!(
                    "switch step {switch_at} beyond {steps} steps"
                )));
            }
            bounds.check(*before, "initial state")?;
            bounds.check(*after, "final state")?;
            (0..*steps)
                .map(|i| if i < *switch_at { *before } else { *after })
                .collect()
        }
        TraceSpec::RandomWalk {
            steps,
            start,
            factor,
            p_move,
            walk_batch,
        } => {
            bounds.check(*start, "start state")?;
            if !(factor.is_finite() && *factor > 1.0) || !(0.0..=1.0).contains(p_move) {
                return Err(Error::Generator(format!(
                    "random walk needs factor > 1 and p_move in [0, 1], got {factor} and {p_move}"
                )));
            }
            let mut state = *start;
            let mut out = Vec::with_capacity(*steps);
            for _ in 0..*steps {
                out.push(state);
                if rng.gen_bool(*p_move) {
                    let r = if rng.gen_bool(0.5) {
                        state.rate_bps * factor
                    } else {
                        state.rate_bps / factor
                    };
                    state.rate_bps = r.clamp(bounds.min_rate_bps, bounds.max_rate_bps);
                }
                if *walk_batch && rng.gen_bool(*p_move) {
                    let b = if rng.gen_bool(0.5) {
                        state.batch.saturating_mul(2)
                    } else {
                        state.batch / 2
                    };
                    state.batch = b.clamp(bounds.min_batch, bounds.max_batch);
                }
            }
            out
        }
        TraceSpec::Sawtooth {
            steps,
            batches,
            rate_bps,
        } => {
            if batches.is_empty() {
                return Err(Error::Generator("sawtooth needs at least one batch size".into()));
            }
            for &b in batches {
                bounds.check(
                    ChannelState {
                        batch: b,
                        rate_bps: *rate_bps,
                    },
                    "sawtooth state",
                )?;
            }
            (0..*steps)
                .map(|i| ChannelState {
                    batch: batches[i % batches.len()],
                    rate_bps: *rate_bps,
                })
                .collect()
        }
    };
    Ok(Scenario::from_states(states))
}

//! Dynamic split computing.
//!
//! Given a per-layer profile of a network and the current channel state
//! (batch size, data rate), this crate finds the layers worth splitting at,
//! picks the split with the lowest end-to-end latency, sweeps that choice
//! over grids of channel states, replays time-varying scenarios against fixed
//! baselines, and checks the latency model against a TCP loopback harness.
//!
//! ```
//! use splitwise::decision::{optimal_split, ChannelState, Strategy};
//! use splitwise::profile::fixtures::toy3;
//!
//! let profile = toy3();
//! // 5 bytes per millisecond
//! let (strategy, latency) = optimal_split(&profile, ChannelState::new(1, 5000.0)?, true)?;
//! assert_eq!(strategy, Strategy::SplitAt(2));
//! assert_eq!(latency.total_ms, 29.0);
//! # Ok::<(), splitwise::Error>(())
//! ```

pub mod decision;
pub mod error;
pub mod net;
pub mod profile;
pub mod scenario;

pub use decision::{
    candidate_strategies, decision_surface, optimal_split, split_time, ChannelState, DecisionOptions, DecisionSurface,
    LatencyBreakdown, Strategy,
};
pub use error::{Error, Result};
pub use profile::{
    bottleneck_report, compression_ratios, compressive_set, load_profile, natural_bottlenecks, BottleneckReport,
    LayerRecord, ModelProfile,
};
pub use scenario::{evaluate_scenario, gain_map, generate_trace, BaselinePolicy, Scenario, ScenarioReport};

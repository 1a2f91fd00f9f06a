//! Monte Carlo harness: configuration, seeded trials, aggregate metrics,
//! statistical validation and CSV output.

pub mod config;
pub mod montecarlo;
pub mod output;
pub mod seeding;
pub mod trial;
pub mod validate;

pub use config::{ExperimentConfig, PolicyConfig};
pub use montecarlo::{fading_comparison, monte_carlo_j, simulate, sweep_budget, JEstimate};
pub use trial::{ChannelOverride, SimError, Simulator, StepRecord, TraceRow};

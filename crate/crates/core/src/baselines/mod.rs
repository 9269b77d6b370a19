//! Baseline weight providers and online portfolio selection benchmarks.

pub mod olps;
mod provider;

pub use olps::{olps_step, run_strategy, OlpsState, Strategy, StrategyKind, StrategyRun};
pub use provider::{BaselineProvider, ProviderContext, WeightsProvider};

//! Simulation harness: synthetic sensor layouts, sampling of pairwise
//! distances, error metrics and seeded multi-trial sweeps.

mod metrics;
mod observations;
mod scenario;
mod sweep;

pub use metrics::{evaluate, evaluate_estimate, EvalResult, Metrics, SUCCESS_THRESHOLD};
pub use observations::{sample_observations, ObservedDistances, SamplingModel};
pub use scenario::{five_node_coords, generate_scenario, Generator, Scenario};
pub use sweep::{
    derive_seed, run_sweep, run_trial, CellAggregate, CellResult, SweepGrid, SweepOptions,
    SweepResult, TrialRecord, TrialSpec,
};

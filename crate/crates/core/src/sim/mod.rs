//! Scenario loading, the fixed-step engine, traces and metrics.

pub mod scenario;

pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
pub mod trace;

pub use trace::{compute_metrics, Metrics, SimulationTrace};
pub mod engine;
pub mod perception;

pub use engine::{compare_modes, run, run_with, RunOptions, SimError};
pub mod shipped;
pub mod plot;

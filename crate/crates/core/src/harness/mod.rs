//! Experiment orchestration: configuration, Monte Carlo batches, sweeps and
//! CSV output.

mod config;
mod experiment;
mod output;
mod seeding;
mod sweep;

pub use config::PilotPolicyKind;
pub use config::{AssocScheme, DataScheme, ExperimentConfig, KappaSetting, PilotScheme, Scheme};
pub use experiment::{
    run_experiment, BatchFailure, CalibrationTable, ExperimentResult, ResultRow, Snapshot,
};
pub use output::{emit_outputs, OutputReport};
pub use seeding::batch_rng;
pub use sweep::{sweep, SweepAxis, SweepPoint};

//! Configuration, experiment drivers and CSV reports.

pub mod config;
pub mod experiments;
pub mod expr;
pub mod report;

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::lod::LodError;
use crate::mesh::MeshError;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{
    run_cpu_comparison, run_invariant_convergence, run_locality_decay, run_long_time_drift,
    run_time_convergence,
};
pub use report::{ReportRow, RunReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("expression {0}")]
    Expression(String),
    #[error("the {0} experiment needs the benchmark problem")]
    Unsupported(&'static str),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Lod(#[from] LodError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn is_not_converged(&self) -> bool {
        matches!(
            self,
            HarnessError::Dynamics(DynamicsError::NotConverged { .. })
        )
    }
}

/// Runs `experiment` with `cfg`.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    match experiment {
        Experiment::Invariants => run_invariant_convergence(cfg),
        Experiment::Decay => run_locality_decay(cfg),
        Experiment::Converge => run_time_convergence(cfg),
        Experiment::Drift => run_long_time_drift(cfg),
        Experiment::Cpu => run_cpu_comparison(cfg),
    }
}

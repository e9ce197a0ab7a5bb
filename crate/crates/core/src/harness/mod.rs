//! Configuration-driven runs: parsing, presets, single scenarios and sweeps.

pub mod build;
pub mod config;
pub mod presets;
pub mod scenario;
pub mod sweep;

use thiserror::Error;

pub use config::{parse_config, CheckKind, ConfigError, RunConfig};
pub use scenario::{run_scenario, CheckOutcome, CheckStatus, RunReport};
pub use sweep::{run_sweep, SweepPoint, SweepSpec};

/// Process exit codes shared by the command-line tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ExitStatus {
    Ok = 0,
    ConfigError = 1,
    SolverFailure = 2,
    CheckFailure = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot set up the run: {0}")]
    Setup(#[from] crate::Error),
    #[error("cannot write outputs: {0}")]
    Output(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_status(&self) -> ExitStatus {
        ExitStatus::ConfigError
    }
}

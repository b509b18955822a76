//! Closed-loop scenarios: configuration, the simulated control loop,
//! logging and metrics.
//!
//! Each tick runs sensors → observer → reference → controller → log →
//! plant. Gain changes reach the loop as prebuilt snapshots and reference
//! commands through a bounded mailbox, so after the first tick the loop
//! neither blocks nor allocates.

mod log;
mod run;
mod scenario;
mod serve;

use std::path::PathBuf;

use thiserror::Error;

pub use log::{compute_rmse, read_log, write_log, Frame, RunLog};
pub use run::{run_scenario, EventRecord, Metrics, RunOptions, RunOutput};
pub use scenario::{apply_gain_change, GainChange, ReconfigEvent, ReferenceProgram, Scenario};
pub use serve::Server;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}", config_message(path, *line, message))]
    Config { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("log: {0}")]
    Log(String),
    #[error("window: {0}")]
    Window(String),
    #[error("{0}")]
    Runtime(String),
}

fn config_message(path: &std::path::Path, line: usize, message: &str) -> String {
    if line == 0 {
        format!("{}: {message}", path.display())
    } else {
        format!("{}:{line}: {message}", path.display())
    }
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Window(_) => 2,
            _ => 1,
        }
    }
}

/// Exit code for a finished run.
pub const EXIT_DIVERGED: i32 = 3;

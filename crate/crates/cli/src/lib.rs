//! Batch front-end for the `vmcis` engine.
//!
//! Each invocation runs one task described by a TOML config and writes its
//! artifacts into an output directory:
//!
//! | task       | artifacts                                        |
//! |------------|--------------------------------------------------|
//! | `gs`       | `trace.jsonl`, `model.ckpt`, `summary.json`      |
//! | `infid`    | `trace.jsonl`, `model.ckpt`, `summary.json`      |
//! | `snr-scan` | `scan.csv`, `summary.json`                       |

pub mod config;
pub mod output;
pub mod run;

pub use config::{RunConfig, Task};
pub use run::{execute, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unusable configuration or input file; exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// The run started but could not finish; exit code 2.
    #[error("run aborted: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

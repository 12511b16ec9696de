//! Batch front end: loads a JSON run configuration, runs one workflow and
//! produces a deterministic JSON report with an exit code.
//!
//! Exit codes: 0 ok, 1 failed verdict or other error, 2 minimality,
//! 3 ill-conditioning, 4 infinite variance, 5 infeasible class.

pub mod config;
pub mod report;
pub mod workflows;

use std::path::Path;

use thiserror::Error;

use pc_extrap_core::Error as CoreError;

pub use config::{LoadedConfig, Overrides, RunConfig};
pub use workflows::{run, Outcome, Workflow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),

    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("cannot write path export: {0}")]
    Csv(#[from] csv::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_MINIMALITY: i32 = 2;
pub const EXIT_CONDITIONING: i32 = 3;
pub const EXIT_INFINITE_VARIANCE: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::Minimality(_) | CoreError::NonInvertibleDensity { .. }) => EXIT_MINIMALITY,
            CliError::Core(CoreError::IllConditioned { .. }) => EXIT_CONDITIONING,
            CliError::Core(CoreError::InfiniteVariance(_)) => EXIT_INFINITE_VARIANCE,
            CliError::Core(CoreError::InfeasibleClass(_)) => EXIT_INFEASIBLE,
            _ => EXIT_FAIL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(..) => "io",
            CliError::Json(_) => "malformed_config",
            CliError::Config(_) => "invalid_config",
            CliError::Csv(_) => "path_export",
            CliError::Core(e) => match e {
                CoreError::Validation(_) => "validation",
                CoreError::Minimality(_) => "minimality",
                CoreError::NonInvertibleDensity { .. } => "non_invertible_density",
                CoreError::IllConditioned { .. } => "ill_conditioned",
                CoreError::InfiniteVariance(_) => "infinite_variance",
                CoreError::InfeasibleClass(_) => "infeasible_class",
                CoreError::Truncation(_) => "truncation",
                CoreError::Aliasing { .. } => "aliasing",
                CoreError::Consistency(_) => "consistency",
            },
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(CoreError::Minimality(_) | CoreError::NonInvertibleDensity { .. }) => {
                Some("Tr[(f+g)^-1] must be integrable; a density vanishing to second order makes error-free extrapolation possible")
            }
            CliError::Core(CoreError::IllConditioned { .. }) => {
                Some("raise numeric.tolerances.condition_limit or numeric.grid_size, or check the densities for near-singularity")
            }
            CliError::Core(CoreError::InfiniteVariance(_)) => Some(
                "this density is only usable through its inverse (kind inverse_density) by the estimate workflow; \
                 oracle-check and simulate need finite-variance densities",
            ),
            CliError::Core(CoreError::InfeasibleClass(_)) => Some("the moment must lie between the means of the bounds V and U"),
            _ => None,
        }
    }
}

/// Read, hash and parse a configuration file, then run `workflow`.
pub fn run_path(workflow: Workflow, path: &Path, ov: &Overrides, csv: Option<&Path>) -> Outcome {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return Outcome::error(workflow, "", CliError::Io(path.display().to_string(), e)),
    };
    let sha = config::sha256_hex(&bytes);
    match LoadedConfig::from_bytes(&bytes) {
        Ok(cfg) => run(workflow, &cfg, ov, csv),
        Err(e) => Outcome::error(workflow, &sha, e),
    }
}

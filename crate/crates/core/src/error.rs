use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("minimality condition fails: {0}")]
    Minimality(String),

    #[error("density is not invertible on a set of positive measure: {longest_run} contiguous singular nodes out of {grid_size}")]
    NonInvertibleDensity { longest_run: usize, grid_size: usize },

    #[error("operator is ill-conditioned (condition estimate {condition:.3e}, limit {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("density has infinite variance: {0}")]
    InfiniteVariance(String),

    #[error("admissible class is infeasible: {0}")]
    InfeasibleClass(String),

    #[error("truncation insufficient: {0}")]
    Truncation(String),

    #[error("aliasing guard violated: kmax {kmax} must be below grid size / 4 ({grid_size} nodes)")]
    Aliasing { kmax: usize, grid_size: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

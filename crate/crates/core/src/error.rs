use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh is not a geodesic icosphere: {0}")]
    NotIcosphere(String),

    #[error("partition leaves {uncovered} vertices uncovered (tau_a = {tau_a} too small)")]
    Coverage { uncovered: usize, tau_a: f64 },

    #[error("region has zero surface area")]
    ZeroArea,

    #[error("transport kernel underflow (epsilon {epsilon} too small for the cost scale); normalize costs or raise epsilon")]
    KernelUnderflow { epsilon: f64 },

    #[error("non-finite loss at epoch {epoch}; restart required")]
    NonFiniteLoss { epoch: usize },

    #[error("point cloud is not enclosed by the reference mesh (max norm {max_norm} >= radius {radius})")]
    NotEnclosed { max_norm: f64, radius: f64 },

    #[error("normal penalty stayed <= 0 after {restarts} restarts")]
    RestartBudgetExhausted { restarts: usize },

    #[error("block {block} still exceeds tau_e = {tau_e} (error {error}) at the subdivision cap")]
    FitUnreachable { block: usize, tau_e: f64, error: f64 },

    #[error("polynomial fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

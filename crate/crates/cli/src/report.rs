use std::path::PathBuf;

use isomesh::pipeline::{Normalization, PipelineConfig, StageReport};
use isomesh::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    /// Stable error name, e.g. `RestartBudgetExhausted`.
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshArtifact {
    pub stage: String,
    pub path: PathBuf,
    pub vertices: usize,
    pub patches: usize,
}

/// `report.json` written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: String,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub input: PathBuf,
    pub input_points: usize,
    pub normalization: Option<Normalization>,
    pub status: String,
    pub error: Option<StageFailure>,
    pub meshes: Vec<MeshArtifact>,
    pub stages: Vec<StageReport>,
    /// Number of fine regions (`N_F`), when the fine stage ran.
    pub fine_regions: Option<usize>,
    pub block_count: Option<usize>,
    pub wall_seconds: f64,
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "InvalidInput",
        Error::Io { .. } => "Io",
        Error::Parse { .. } => "Parse",
        Error::NotIcosphere(_) => "NotIcosphere",
        Error::Coverage { .. } => "Coverage",
        Error::ZeroArea => "ZeroArea",
        Error::KernelUnderflow { .. } => "KernelUnderflow",
        Error::NonFiniteLoss { .. } => "NonFiniteLoss",
        Error::NotEnclosed { .. } => "NotEnclosed",
        Error::RestartBudgetExhausted { .. } => "RestartBudgetExhausted",
        Error::FitUnreachable { .. } => "FitUnreachable",
        Error::Fit(_) => "Fit",
    }
}

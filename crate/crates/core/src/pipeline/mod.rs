//! The three-stage deformation of the reference sphere onto a point cloud.

mod coarse;
mod config;
pub mod fine;
mod global;
mod local;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use coarse::{
    coarse_mapping, deform_local_coarse, divide_cloud_coarse, fuse_overlap_targets, integrate_coarse,
    CoarseDivision, CoarseRegionJob,
};
pub use config::{BlockSettings, GlobalSettings, LocalSettings, PipelineConfig, Stage, TauE};
pub use fine::{fine_mapping, Block, FineRegion, PolySurface};
pub use global::{global_mapping, StageResult};
pub use local::LocalFrame;

use crate::error::{Error, Result};
use crate::geometry::{build_icosphere, PointCloud, TriangleMesh, Vec3};
use crate::nn::TrainReport;

/// Similarity that takes the input cloud into the reference frame:
/// `normalized = (p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; 3],
    pub scale: f64,
}

impl Normalization {
    /// Centroid to the origin, farthest point at `fill * radius`.
    pub fn fit(cloud: &PointCloud, radius: f64, fill: f64) -> Result<Self> {
        let c = cloud.centroid();
        let max = cloud.points().iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::InvalidInput("cloud has no spatial extent".into()));
        }
        Ok(Self {
            center: c.into(),
            scale: fill * radius / max,
        })
    }

    pub fn identity() -> Self {
        Self {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - Vec3::from(self.center)) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale + Vec3::from(self.center)
    }
}

/// Training summary of one local network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: usize,
    pub vertices: usize,
    pub points: usize,
    /// No local points: the region keeps its incoming coordinates.
    pub skipped: bool,
    pub restarts: usize,
    pub phase1_loss: Option<f64>,
    pub phase2_loss: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub phase1_losses: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub phase2_losses: Vec<f64>,
}

impl RegionReport {
    pub(crate) fn skipped(region: usize, vertices: usize) -> Self {
        Self {
            region,
            vertices,
            points: 0,
            skipped: true,
            restarts: 0,
            phase1_loss: None,
            phase2_loss: None,
            phase1_losses: Vec::new(),
            phase2_losses: Vec::new(),
        }
    }

    pub(crate) fn record(&mut self, phase: u8, report: &TrainReport) {
        match phase {
            1 => {
                self.phase1_loss = Some(report.final_loss);
                self.phase1_losses = report.losses.clone();
            }
            _ => {
                self.phase2_loss = Some(report.final_loss);
                self.phase2_losses = report.losses.clone();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub wall_seconds: f64,
    /// Global stage: loss per epoch of the accepted run.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub losses: Vec<f64>,
    /// Global stage: `(epoch, value)` of every normal-penalty check.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub penalties: Vec<(usize, f64)>,
    pub restarts: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub regions: Vec<RegionReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub block_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tau_e: Option<f64>,
    pub warnings: Vec<String>,
}

impl StageReport {
    pub(crate) fn new(stage: Stage) -> Self {
        Self {
            stage,
            wall_seconds: 0.0,
            losses: Vec::new(),
            penalties: Vec::new(),
            restarts: 0,
            regions: Vec::new(),
            block_count: None,
            tau_e: None,
            warnings: Vec::new(),
        }
    }

    /// Region count (`N_F` for the fine stage).
    pub fn region_count(&self) -> usize {
        self.regions.len()
    }
}

/// Meshes of every completed stage, in the input cloud's units.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub normalization: Normalization,
    pub r1: Option<TriangleMesh>,
    pub r2: Option<TriangleMesh>,
    pub r3: Option<TriangleMesh>,
    pub reports: Vec<StageReport>,
}

impl PipelineResult {
    /// Output of the last completed stage.
    ///
    /// # Panics
    /// If no stage completed.
    pub fn final_mesh(&self) -> &TriangleMesh {
        self.r3
            .as_ref()
            .or(self.r2.as_ref())
            .or(self.r1.as_ref())
            .expect("no stage completed")
    }
}

/// A pipeline run that may have stopped early; completed stages are kept.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub result: PipelineResult,
    pub failure: Option<(Stage, Error)>,
}

/// Runs all configured stages and returns the meshes in the input's units.
pub fn run_pipeline(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let outcome = run_pipeline_outcome(cloud, cfg)?;
    match outcome.failure {
        Some((_, e)) => Err(e),
        None => Ok(outcome.result),
    }
}

/// Like [`run_pipeline`], but keeps the stages that finished before a
/// failure. Errors only on invalid configuration or input.
pub fn run_pipeline_outcome(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let norm = Normalization::fit(cloud, cfg.reference_radius, cfg.fill)?;
    let local = cloud.map(|p| norm.apply(p));
    let r0 = build_icosphere(cfg.reference_frequency, cfg.reference_radius);
    let back = |m: &TriangleMesh| m.map_vertices(|v| norm.invert(v));
    // Stages work in the normalized frame; a fixed tolerance is given in input units.
    let scaled;
    let cfg = match cfg.tau_e {
        TauE::Fixed(v) => {
            scaled = PipelineConfig {
                tau_e: TauE::Fixed(v * norm.scale),
                ..cfg.clone()
            };
            &scaled
        }
        TauE::Auto => cfg,
    };
    let mut result = PipelineResult {
        normalization: norm,
        r1: None,
        r2: None,
        r3: None,
        reports: Vec::new(),
    };
    let fail = |result, stage, e| Ok(PipelineOutcome {
        result,
        failure: Some((stage, e)),
    });

    log::info!("global mapping: {} points, {} reference vertices", local.len(), r0.vertex_count());
    let t = Instant::now();
    let r1 = match global_mapping(&r0, &local, cfg) {
        Ok(s) => s,
        Err(e) => return fail(result, Stage::Global, e),
    };
    let mut report = r1.report;
    report.wall_seconds = t.elapsed().as_secs_f64();
    result.reports.push(report);
    result.r1 = Some(back(&r1.mesh));
    if cfg.stop_after == Stage::Global {
        return Ok(PipelineOutcome { result, failure: None });
    }

    log::info!("coarse local mapping");
    let t = Instant::now();
    let (r2, mut report) = match coarse_mapping(&r0, &r1.mesh, &local, cfg) {
        Ok(s) => s,
        Err(e) => return fail(result, Stage::Coarse, e),
    };
    report.wall_seconds = t.elapsed().as_secs_f64();
    result.reports.push(report);
    result.r2 = Some(back(&r2));
    if cfg.stop_after == Stage::Coarse {
        return Ok(PipelineOutcome { result, failure: None });
    }

    log::info!("fine local mapping");
    let t = Instant::now();
    let (r3, mut report) = match fine_mapping(&r0, &r2, &local, cfg) {
        Ok(s) => s,
        Err(e) => return fail(result, Stage::Fine, e),
    };
    report.wall_seconds = t.elapsed().as_secs_f64();
    result.reports.push(report);
    result.r3 = Some(back(&r3));
    Ok(PipelineOutcome { result, failure: None })
}

/// Independent, reproducible seed for one network or sampler.
pub(crate) fn derive_seed(base: u64, stage: u64, index: u64, attempt: u64) -> u64 {
    let mut x = base;
    for v in [stage, index, attempt] {
        x = splitmix(x ^ splitmix(v.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    x
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

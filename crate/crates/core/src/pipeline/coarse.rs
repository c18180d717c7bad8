use rayon::prelude::*;

use super::config::{PipelineConfig, Stage};
use super::local::{fuse_points, integrate, train_local_job, JobSettings, JobSpec, LocalJob};
use super::StageReport;
use crate::error::Result;
use crate::geometry::{partition_coarse, select_anchors, LocalRegion, PointCloud, TriangleMesh, Vec3};
use crate::spatial::KdTree;

const STAGE_SEED: u64 = 2;

/// Trained coarse region; `None` entries in a job list are empty regions.
pub type CoarseRegionJob = LocalJob;

/// The cloud split by nearest `R1` vertex into one local cloud per region.
#[derive(Debug, Clone)]
pub struct CoarseDivision {
    pub regions: Vec<LocalRegion>,
    /// Per region, indices into the cloud.
    pub local_clouds: Vec<Vec<usize>>,
    /// Per cloud point, its nearest mesh vertex.
    pub cloud_to_vertex: Vec<usize>,
}

impl CoarseDivision {
    pub fn local_cloud(&self, region: usize, cloud: &PointCloud) -> Vec<Vec3> {
        self.local_clouds[region].iter().map(|&p| cloud.points()[p]).collect()
    }
}

/// Index of the nearest mesh vertex for every point.
pub(crate) fn nearest_vertices(mesh: &TriangleMesh, points: &[Vec3]) -> Vec<usize> {
    let tree = KdTree::new(mesh.vertices());
    points
        .par_iter()
        .map(|p| tree.nearest(p).expect("mesh has vertices").0)
        .collect()
}

/// A point joins every region that owns its nearest vertex of `r1`.
pub fn divide_cloud_coarse(r1: &TriangleMesh, regions: Vec<LocalRegion>, cloud: &PointCloud) -> CoarseDivision {
    let cloud_to_vertex = nearest_vertices(r1, cloud.points());
    let local_clouds = regions
        .iter()
        .map(|r| {
            cloud_to_vertex
                .iter()
                .enumerate()
                .filter(|(_, v)| r.contains(**v))
                .map(|(p, _)| p)
                .collect()
        })
        .collect();
    CoarseDivision {
        regions,
        local_clouds,
        cloud_to_vertex,
    }
}

/// Phase-1 training of one region: centroid frame, Lloyd samples on the
/// `beta2`-enlarged local mesh, frozen transport correspondence.
pub fn deform_local_coarse(
    r1: &TriangleMesh,
    division: &CoarseDivision,
    region: usize,
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<Option<LocalJob>> {
    let sizes = cfg.layer_sizes();
    let spec = JobSpec {
        index: region,
        mesh: r1,
        region: &division.regions[region],
        points: division.local_clouds[region].clone(),
        cloud: cloud.points(),
        beta: cfg.beta2,
        mesh_targets: None,
        mesh_weight: 0.0,
    };
    train_local_job(spec, &job_settings(cfg, &sizes))
}

fn job_settings<'a>(cfg: &'a PipelineConfig, sizes: &'a [usize]) -> JobSettings<'a> {
    JobSettings {
        sizes,
        activation: cfg.activation,
        sinkhorn: &cfg.sinkhorn,
        train: &cfg.coarse.phase1,
        lloyd_iterations: cfg.coarse.lloyd_iterations,
        max_restarts: cfg.coarse.max_restarts,
        seed: cfg.seed,
        stage: STAGE_SEED,
    }
}

/// New coordinates for every cloud point: the `w^C`-weighted mean of its
/// images under all regions that contain it (weight of its nearest vertex).
/// Returns the fused points and the number of zero-weight fallbacks.
pub fn fuse_overlap_targets(division: &CoarseDivision, jobs: &[Option<LocalJob>], cloud: &PointCloud) -> (Vec<Vec3>, usize) {
    let trained: Vec<&LocalJob> = jobs.iter().flatten().collect();
    fuse_points(cloud.points(), &trained, |job, p| {
        division.regions[job.region]
            .weight_of(division.cloud_to_vertex[p])
            .unwrap_or(0.0)
    })
}

/// `v2 = Σ w_i f_i(β2 v1) / Σ w_i` over the regions owning each vertex.
pub fn integrate_coarse(r1: &TriangleMesh, regions: &[LocalRegion], jobs: &[Option<LocalJob>]) -> TriangleMesh {
    let out = integrate(r1, regions, jobs, None);
    assert_eq!(out.orphans, 0, "coarse partition left vertices uncovered");
    out.mesh
}

/// Second stage: 32 overlapping caps, two training phases, weighted fusion.
pub fn coarse_mapping(
    r0: &TriangleMesh,
    r1: &TriangleMesh,
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<(TriangleMesh, StageReport)> {
    let mut report = StageReport::new(Stage::Coarse);
    let anchors = select_anchors(r0)?;
    let regions = partition_coarse(r0, &anchors, cfg.tau_a)?;
    let division = divide_cloud_coarse(r1, regions, cloud);
    for (i, pts) in division.local_clouds.iter().enumerate() {
        if pts.is_empty() {
            report.warnings.push(format!("region {i} received no points; kept undeformed"));
        }
    }

    let mut jobs: Vec<Option<LocalJob>> = (0..division.regions.len())
        .into_par_iter()
        .map(|i| deform_local_coarse(r1, &division, i, cloud, cfg))
        .collect::<Result<_>>()?;

    let (fused, fallbacks) = fuse_overlap_targets(&division, &jobs, cloud);
    if fallbacks > 0 {
        report.warnings.push(format!("{fallbacks} points fused with zero total weight"));
    }
    jobs.par_iter_mut()
        .flatten()
        .try_for_each(|job| {
            let seed = (cfg.seed, STAGE_SEED + 10, job.region as u64);
            job.retrain(&fused, &cfg.coarse.phase2, cfg.coarse.max_restarts, seed, 0.0)
        })?;

    let r2 = integrate_coarse(r1, &division.regions, &jobs);
    report.restarts = jobs.iter().flatten().map(|j| j.report.restarts).sum();
    report.regions = jobs
        .into_iter()
        .enumerate()
        .map(|(i, j)| match j {
            Some(j) => j.report,
            None => super::RegionReport::skipped(i, division.regions[i].len()),
        })
        .collect();
    Ok((r2, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;

    #[test]
    fn self_cloud_division_is_exact() {
        let r1 = build_icosphere(8, 1.0);
        let anchors = select_anchors(&r1).unwrap();
        let regions = partition_coarse(&r1, &anchors, 0.55).unwrap();
        let cloud = PointCloud::new(r1.vertices().to_vec()).unwrap();
        let d = divide_cloud_coarse(&r1, regions, &cloud);
        for (r, pts) in d.regions.iter().zip(&d.local_clouds) {
            assert_eq!(pts, &r.vertex_indices);
        }
        let total: usize = d.local_clouds.iter().map(Vec::len).sum();
        assert!(total >= cloud.len());
    }

    #[test]
    fn single_point_reaches_owning_regions() {
        let r1 = build_icosphere(8, 1.0);
        let anchors = select_anchors(&r1).unwrap();
        let regions = partition_coarse(&r1, &anchors, 0.55).unwrap();
        let p = Vec3::new(0.3, -0.5, 0.8).normalize();
        let cloud = PointCloud::new(vec![p]).unwrap();
        let d = divide_cloud_coarse(&r1, regions, &cloud);
        let nearest = (0..r1.vertex_count())
            .min_by(|&a, &b| (r1.vertices()[a] - p).norm().total_cmp(&(r1.vertices()[b] - p).norm()))
            .unwrap();
        for (r, pts) in d.regions.iter().zip(&d.local_clouds) {
            assert_eq!(pts.len(), r.contains(nearest) as usize);
        }
    }
}

//! Shape-adaptive local mapping driven by polynomial block fits.

mod blocks;
mod ellipse;
mod poly;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use blocks::{build_blocks, Block};
pub use ellipse::{fallback_ellipse, min_volume_ellipse, Ellipse};
pub use poly::{fit_polynomial, PolySurface, DEGREE, TERMS};

use super::coarse::nearest_vertices;
use super::config::{PipelineConfig, Stage};
use super::derive_seed;
use super::local::{fuse_points, integrate, train_local_job, JobSettings, JobSpec, LocalJob};
use super::{RegionReport, StageReport};
use crate::error::Result;
use crate::geometry::{LocalRegion, PointCloud, TriangleMesh, Vec3};

const STAGE_SEED: u64 = 3;
// The rescaled ellipse puts its farthest point at radius 1 up to rounding.
const MEMBERSHIP_SLACK: f64 = 1e-9;

/// One fine region: the reference vertices whose directions fall inside an
/// ellipse on the tangent plane at the block's spherical centroid.
#[derive(Debug, Clone)]
pub struct FineRegion {
    pub region: LocalRegion,
    pub block: usize,
    /// Unit direction where the tangent plane touches the sphere.
    pub center: Vec3,
    /// Orthonormal tangent basis at `center`.
    pub basis: [Vec3; 2],
    pub ellipse: Ellipse,
    /// The ellipse came from the fallback rather than the enclosing fit.
    pub degenerate: bool,
    /// Cloud points whose nearest `R2` vertex lies in the region.
    pub points: Vec<usize>,
}

impl FineRegion {
    fn project(&self, d: &Vec3) -> [f64; 2] {
        [d.dot(&self.basis[0]), d.dot(&self.basis[1])]
    }

    /// Elliptic radius of a unit direction, `None` on the far hemisphere.
    pub fn radius(&self, d: &Vec3) -> Option<f64> {
        (d.dot(&self.center) > 0.0).then(|| self.ellipse.radius(self.project(d)))
    }
}

fn tangent_basis(c: &Vec3) -> [Vec3; 2] {
    let helper = if c.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = c.cross(&helper).normalize();
    [e1, c.cross(&e1)]
}

fn directions(r0: &TriangleMesh) -> Vec<Vec3> {
    r0.vertices().iter().map(|v| v.normalize()).collect()
}

/// Mean edge length of the reference mesh projected onto the unit sphere.
pub fn mean_unit_edge(r0: &TriangleMesh) -> f64 {
    let dirs = directions(r0);
    let (mut sum, mut count) = (0.0, 0usize);
    for p in r0.patches() {
        for k in 0..3 {
            let (a, b) = (p[k], p[(k + 1) % 3]);
            if a < b {
                sum += (dirs[a] - dirs[b]).norm();
                count += 1;
            }
        }
    }
    // Each interior edge is seen once from each side; only one side counts.
    sum / count.max(1) as f64
}

/// Builds one region per block. `cloud_to_vertex` maps every cloud point to
/// its nearest `R2` vertex.
pub fn build_fine_regions(r0: &TriangleMesh, blocks: &[Block], cloud_to_vertex: &[usize]) -> Vec<FineRegion> {
    let dirs = directions(r0);
    let min_axis = 1.5 * mean_unit_edge(r0);
    blocks
        .iter()
        .enumerate()
        .map(|(b, block)| {
            let mut touched: Vec<usize> = block.point_indices.iter().map(|&p| cloud_to_vertex[p]).collect();
            touched.sort_unstable();
            touched.dedup();
            let sum = touched.iter().fold(Vec3::zeros(), |acc, &v| acc + dirs[v]);
            let center = if sum.norm() > 1e-12 { sum.normalize() } else { dirs[touched[0]] };
            let basis = tangent_basis(&center);
            let flat: Vec<[f64; 2]> = touched
                .iter()
                .map(|&v| [dirs[v].dot(&basis[0]), dirs[v].dot(&basis[1])])
                .collect();
            let (ellipse, degenerate) = match min_volume_ellipse(&flat, 1e-7, 1000) {
                Some(e) if e.semi_axes.iter().all(|&s| s >= min_axis) => (e, false),
                _ => (fallback_ellipse(&flat, min_axis), true),
            };
            let mut fine = FineRegion {
                region: LocalRegion {
                    vertex_indices: Vec::new(),
                    patch_indices: Vec::new(),
                    weights: Vec::new(),
                    anchor: None,
                },
                block: b,
                center,
                basis,
                ellipse,
                degenerate,
                points: Vec::new(),
            };
            for (v, d) in dirs.iter().enumerate() {
                if let Some(r) = fine.radius(d).filter(|&r| r <= 1.0 + MEMBERSHIP_SLACK) {
                    fine.region.vertex_indices.push(v);
                    fine.region.weights.push((1.0 - r).max(0.0));
                }
            }
            fine.region.patch_indices = LocalRegion::closed_patches(r0, &fine.region.vertex_indices);
            fine.points = cloud_to_vertex
                .iter()
                .enumerate()
                .filter(|(_, v)| fine.region.contains(**v))
                .map(|(p, _)| p)
                .collect();
            fine
        })
        .collect()
}

/// `count` points on a block's polynomial surface, uniform in surface area
/// over the footprint of the fitted points.
pub fn sample_surface(surface: &PolySurface, count: usize, seed: u64) -> Vec<Vec3> {
    let [lo, hi] = surface.footprint;
    let span = [(hi[0] - lo[0]).max(0.0), (hi[1] - lo[1]).max(0.0)];
    let h = 1e-6 * span[0].max(span[1]).max(1e-12);
    let jacobian = |u: f64, v: f64| {
        let hu = (surface.height(u + h, v) - surface.height(u - h, v)) / (2.0 * h);
        let hv = (surface.height(u, v + h) - surface.height(u, v - h)) / (2.0 * h);
        (1.0 + hu * hu + hv * hv).sqrt()
    };
    let grid = 16;
    let mut bound: f64 = 1.0;
    for i in 0..=grid {
        for j in 0..=grid {
            let u = lo[0] + span[0] * i as f64 / grid as f64;
            let v = lo[1] + span[1] * j as f64 / grid as f64;
            bound = bound.max(jacobian(u, v));
        }
    }
    bound *= 1.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        let u = lo[0] + span[0] * rng.random::<f64>();
        let v = lo[1] + span[1] * rng.random::<f64>();
        tries += 1;
        // Rejection keeps the density proportional to the area element;
        // after many rejections accept outright so a steep patch terminates.
        if tries > 1000 * count.max(1) || rng.random::<f64>() * bound <= jacobian(u, v) {
            out.push(surface.point(u, v));
        }
    }
    out
}

/// Phase-1 training of one fine region on `R2`. The second pair set pairs
/// the `beta3`-enlarged region vertices with samples of the block surface.
pub fn deform_local_fine(
    r2: &TriangleMesh,
    regions: &[FineRegion],
    blocks: &[Block],
    index: usize,
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<Option<LocalJob>> {
    let fine = &regions[index];
    if fine.region.patch_indices.is_empty() || fine.points.is_empty() {
        return Ok(None);
    }
    let sizes = cfg.layer_sizes();
    let seed = derive_seed(cfg.seed, STAGE_SEED, index as u64, u64::MAX - 1);
    let surface = sample_surface(&blocks[fine.block].surface, fine.region.len(), seed);
    let spec = JobSpec {
        index,
        mesh: r2,
        region: &fine.region,
        points: fine.points.clone(),
        cloud: cloud.points(),
        beta: cfg.beta3,
        mesh_targets: Some(surface),
        mesh_weight: cfg.alpha,
    };
    let settings = JobSettings {
        sizes: &sizes,
        activation: cfg.activation,
        sinkhorn: &cfg.sinkhorn,
        train: &cfg.fine.phase1,
        lloyd_iterations: cfg.fine.lloyd_iterations,
        max_restarts: cfg.fine.max_restarts,
        seed: cfg.seed,
        stage: STAGE_SEED,
    };
    train_local_job(spec, &settings)
}

/// Share of reference patches that lie wholly inside at least one region.
pub fn patch_coverage(r0: &TriangleMesh, regions: &[FineRegion]) -> f64 {
    let mut covered = vec![false; r0.patch_count()];
    for r in regions {
        for &p in &r.region.patch_indices {
            covered[p] = true;
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / covered.len().max(1) as f64
}

/// Third stage: blocks, elliptic regions, two training phases, top-k fusion.
pub fn fine_mapping(
    r0: &TriangleMesh,
    r2: &TriangleMesh,
    cloud: &PointCloud,
    cfg: &PipelineConfig,
) -> Result<(TriangleMesh, StageReport)> {
    let mut report = StageReport::new(Stage::Fine);
    let (lo, hi) = cloud.bounding_box();
    let tau_e = cfg.tau_e.resolve((hi - lo).norm());
    let blocks = build_blocks(cloud, tau_e, &cfg.blocks)?;
    report.tau_e = Some(tau_e);
    report.block_count = Some(blocks.len());
    log::info!("{} blocks at tau_e = {tau_e:.3e}", blocks.len());

    let cloud_to_vertex = nearest_vertices(r2, cloud.points());
    let regions = build_fine_regions(r0, &blocks, &cloud_to_vertex);
    for (i, r) in regions.iter().enumerate() {
        if r.region.patch_indices.is_empty() {
            report.warnings.push(format!("fine region {i} holds no closed patch; skipped"));
        } else if r.points.is_empty() {
            report.warnings.push(format!("fine region {i} received no points; skipped"));
        }
    }
    let coverage = patch_coverage(r0, &regions);
    if coverage < 1.0 {
        report.warnings.push(format!(
            "fine regions cover {:.2}% of patches",
            100.0 * coverage
        ));
    }

    let mut jobs: Vec<Option<LocalJob>> = (0..regions.len())
        .into_par_iter()
        .map(|i| deform_local_fine(r2, &regions, &blocks, i, cloud, cfg))
        .collect::<Result<_>>()?;

    let trained: Vec<&LocalJob> = jobs.iter().flatten().collect();
    let (fused, fallbacks) = fuse_points(cloud.points(), &trained, |job, p| {
        regions[job.region].region.weight_of(cloud_to_vertex[p]).unwrap_or(0.0)
    });
    if fallbacks > 0 {
        report.warnings.push(format!("{fallbacks} points fused with zero total weight"));
    }
    jobs.par_iter_mut().flatten().try_for_each(|job| {
        let seed = (cfg.seed, STAGE_SEED + 10, job.region as u64);
        job.retrain(&fused, &cfg.fine.phase2, cfg.fine.max_restarts, seed, 0.0)
    })?;

    // Skipped regions take no part in the fusion.
    let (kept_regions, kept_jobs): (Vec<LocalRegion>, Vec<Option<LocalJob>>) = regions
        .iter()
        .zip(&jobs)
        .filter(|(_, j)| j.is_some())
        .map(|(r, j)| (r.region.clone(), j.clone()))
        .unzip();
    let out = integrate(r2, &kept_regions, &kept_jobs, Some(cfg.top_k));
    if out.orphans > 0 {
        report.warnings.push(format!("{} vertices outside every fine region keep their coarse position", out.orphans));
    }
    if out.zero_weight > 0 {
        report.warnings.push(format!("{} vertices had only zero-weight images", out.zero_weight));
    }
    report.restarts = jobs.iter().flatten().map(|j| j.report.restarts).sum();
    report.regions = jobs
        .into_iter()
        .enumerate()
        .map(|(i, j)| match j {
            Some(j) => j.report,
            None => RegionReport::skipped(i, regions[i].region.len()),
        })
        .collect();
    Ok((out.mesh, report))
}

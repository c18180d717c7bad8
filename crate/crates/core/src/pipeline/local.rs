use serde::{Deserialize, Serialize};

use super::{derive_seed, RegionReport};
use crate::error::{Error, Result};
use crate::geometry::{centroid_of, lloyd_sample_with, LloydOptions, LocalRegion, TriangleMesh, Vec3};
use crate::nn::{mlp_train, Activation, Mlp, PairSet, TrainConfig, TrainReport};
use crate::spatial::KdTree;
use crate::transport::{correspond, Correspondence, SinkhornParams};

/// Translation-only frame centred on a local mesh, with the enlargement
/// applied to network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub center: Vec3,
    pub beta: f64,
}

impl LocalFrame {
    pub fn around(vertices: &[Vec3], beta: f64) -> Self {
        Self {
            center: centroid_of(vertices),
            beta,
        }
    }

    /// Network input for a mesh vertex (or mesh-surface point).
    pub fn input(&self, v: &Vec3) -> Vec3 {
        (v - self.center) * self.beta
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        p - self.center
    }

    pub fn to_global(&self, q: &Vec3) -> Vec3 {
        q + self.center
    }
}

pub(crate) struct Trained {
    pub mlp: Mlp,
    pub report: TrainReport,
    pub restarts: usize,
}

/// Trains a network on fixed pair sets, reinitializing from a fresh seed if
/// training diverges. `start` continues from existing parameters; after a
/// divergence the retry starts from scratch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_with_restarts(
    sizes: &[usize],
    activation: Activation,
    start: Option<Mlp>,
    sets: &[PairSet<'_>],
    cfg: &TrainConfig,
    max_restarts: usize,
    seed: (u64, u64, u64),
) -> Result<Trained> {
    let (base, stage, index) = seed;
    let mut start = start;
    for attempt in 0..=max_restarts {
        let mut mlp = match start.take() {
            Some(m) => m,
            None => Mlp::new(sizes, activation, derive_seed(base, stage, index, attempt as u64)),
        };
        match mlp_train(&mut mlp, sets, cfg) {
            Ok(report) => {
                return Ok(Trained {
                    mlp,
                    report,
                    restarts: attempt,
                })
            }
            Err(Error::NonFiniteLoss { epoch }) => {
                log::warn!("region {index}: training diverged at epoch {epoch}, reinitializing");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::RestartBudgetExhausted { restarts: max_restarts })
}

/// Per-vertex fused position from `(weight, image)` candidates; falls back to
/// the plain mean when every weight is zero. Returns whether it fell back.
pub(crate) fn weighted_mean(candidates: &[(f64, Vec3)]) -> (Vec3, bool) {
    let total: f64 = candidates.iter().map(|(w, _)| w).sum();
    if total > 0.0 {
        let sum = candidates.iter().fold(Vec3::zeros(), |acc, (w, p)| acc + p * *w);
        (sum / total, false)
    } else {
        let sum = candidates.iter().fold(Vec3::zeros(), |acc, (_, p)| acc + p);
        (sum / candidates.len() as f64, true)
    }
}

/// A trained local network with the frozen data it was trained on.
#[derive(Debug, Clone)]
pub struct LocalJob {
    pub region: usize,
    pub frame: LocalFrame,
    /// Network inputs sampled on the enlarged local mesh (local frame).
    pub samples: Vec<Vec3>,
    /// Global indices of the local cloud's points.
    pub points: Vec<usize>,
    /// Sample `j` is paired with local point `correspondence.targets[j]`.
    pub correspondence: Correspondence,
    /// Optional second pair set: enlarged vertices and their targets.
    pub mesh_inputs: Vec<Vec3>,
    pub mesh_targets: Vec<Vec3>,
    pub network: Mlp,
    pub report: RegionReport,
}

impl LocalJob {
    /// One image per local point, in global coordinates: the mean image of
    /// the samples paired with it, or, when none is, the image nearest to it.
    pub fn point_images(&self, cloud: &[Vec3]) -> Vec<Vec3> {
        let outputs: Vec<Vec3> = self
            .network
            .forward_points(&self.samples)
            .iter()
            .map(|q| self.frame.to_global(q))
            .collect();
        let mut sum = vec![Vec3::zeros(); self.points.len()];
        let mut count = vec![0usize; self.points.len()];
        for (j, k) in self.correspondence.pairs() {
            sum[k] += outputs[j];
            count[k] += 1;
        }
        let tree = KdTree::new(&outputs);
        sum.iter()
            .zip(&count)
            .zip(&self.points)
            .map(|((s, &c), &p)| {
                if c > 0 {
                    s / c as f64
                } else {
                    outputs[tree.nearest(&cloud[p]).expect("outputs are non-empty").0]
                }
            })
            .collect()
    }

    /// Sample targets (local frame) taken from fused cloud coordinates.
    pub fn retarget(&self, fused: &[Vec3]) -> Vec<Vec3> {
        self.correspondence
            .targets
            .iter()
            .map(|&k| self.frame.to_local(&fused[self.points[k]]))
            .collect()
    }

    /// Images of the given vertices under this network, in global coordinates.
    pub fn vertex_images(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        let inputs: Vec<Vec3> = vertices.iter().map(|v| self.frame.input(v)).collect();
        self.network
            .forward_points(&inputs)
            .iter()
            .map(|q| self.frame.to_global(q))
            .collect()
    }

    pub(crate) fn retrain(&mut self, fused: &[Vec3], cfg: &TrainConfig, max_restarts: usize, seed: (u64, u64, u64), mesh_weight: f64) -> Result<()> {
        let targets = self.retarget(fused);
        let sets = [
            PairSet {
                inputs: &self.samples,
                targets: &targets,
                weight: 1.0,
            },
            PairSet {
                inputs: &self.mesh_inputs,
                targets: &self.mesh_targets,
                weight: mesh_weight,
            },
        ];
        let sizes = self.network.sizes().to_vec();
        let activation = self.network.activation();
        let trained = train_with_restarts(
            &sizes,
            activation,
            Some(self.network.clone()),
            &sets,
            cfg,
            max_restarts,
            seed,
        )?;
        self.report.restarts += trained.restarts;
        self.report.record(2, &trained.report);
        self.network = trained.mlp;
        Ok(())
    }
}

/// Inputs of one local deformation.
pub(crate) struct JobSpec<'a> {
    pub index: usize,
    /// Mesh whose coordinates the region takes (the previous stage's output).
    pub mesh: &'a TriangleMesh,
    pub region: &'a LocalRegion,
    pub points: Vec<usize>,
    pub cloud: &'a [Vec3],
    pub beta: f64,
    /// Global-frame targets for the region's vertices (second loss term).
    pub mesh_targets: Option<Vec<Vec3>>,
    pub mesh_weight: f64,
}

/// Settings shared by the local stages.
pub(crate) struct JobSettings<'a> {
    pub sizes: &'a [usize],
    pub activation: Activation,
    pub sinkhorn: &'a SinkhornParams,
    pub train: &'a TrainConfig,
    pub lloyd_iterations: usize,
    pub max_restarts: usize,
    pub seed: u64,
    pub stage: u64,
}

/// Samples the enlarged local mesh, freezes the transport correspondence to
/// the local cloud, and trains the first phase. `None` for an empty cloud.
pub(crate) fn train_local_job(spec: JobSpec<'_>, s: &JobSettings<'_>) -> Result<Option<LocalJob>> {
    let vertices = spec.region.len();
    if spec.points.is_empty() {
        return Ok(None);
    }
    let own: Vec<Vec3> = spec.region.vertex_indices.iter().map(|&v| spec.mesh.vertices()[v]).collect();
    let frame = LocalFrame::around(&own, spec.beta);
    let scaled = spec.mesh.map_vertices(|v| frame.input(v));
    let opts = LloydOptions {
        iterations: s.lloyd_iterations,
        seed: derive_seed(s.seed, s.stage, spec.index as u64, u64::MAX),
        ..LloydOptions::default()
    };
    let samples = lloyd_sample_with(&scaled, spec.region, spec.points.len(), &opts)?.into_points();
    let local: Vec<Vec3> = spec.points.iter().map(|&p| frame.to_local(&spec.cloud[p])).collect();
    let correspondence = correspond(&samples, &local, s.sinkhorn)?;
    let targets = correspondence.gather(&local);

    let (mesh_inputs, mesh_targets) = match spec.mesh_targets {
        Some(t) if !t.is_empty() => {
            let inputs: Vec<Vec3> = own.iter().map(|v| frame.input(v)).collect();
            let t_local: Vec<Vec3> = t.iter().map(|p| frame.to_local(p)).collect();
            let pairing = correspond(&inputs, &t_local, s.sinkhorn)?;
            (inputs, pairing.gather(&t_local))
        }
        _ => (Vec::new(), Vec::new()),
    };
    let sets = [
        PairSet {
            inputs: &samples,
            targets: &targets,
            weight: 1.0,
        },
        PairSet {
            inputs: &mesh_inputs,
            targets: &mesh_targets,
            weight: spec.mesh_weight,
        },
    ];
    let trained = train_with_restarts(
        s.sizes,
        s.activation,
        None,
        &sets,
        s.train,
        s.max_restarts,
        (s.seed, s.stage, spec.index as u64),
    )?;
    let mut report = RegionReport::skipped(spec.index, vertices);
    report.skipped = false;
    report.points = spec.points.len();
    report.restarts = trained.restarts;
    report.record(1, &trained.report);
    Ok(Some(LocalJob {
        region: spec.index,
        frame,
        samples,
        points: spec.points,
        correspondence,
        mesh_inputs,
        mesh_targets,
        network: trained.mlp,
        report,
    }))
}

/// Fuses per-region images of cloud points into one coordinate per point.
///
/// `weight(job, point)` gives the fusion weight of a point's image under a
/// job. Points reached by no job keep their coordinates. Returns the fused
/// points and the number of points whose weights were all zero.
pub(crate) fn fuse_points(
    cloud: &[Vec3],
    jobs: &[&LocalJob],
    weight: impl Fn(&LocalJob, usize) -> f64,
) -> (Vec<Vec3>, usize) {
    let mut candidates: Vec<Vec<(f64, Vec3)>> = vec![Vec::new(); cloud.len()];
    for job in jobs {
        for (&p, img) in job.points.iter().zip(job.point_images(cloud)) {
            candidates[p].push((weight(job, p), img));
        }
    }
    let mut fallbacks = 0;
    let fused = candidates
        .iter()
        .zip(cloud)
        .map(|(c, p)| {
            if c.is_empty() {
                return *p;
            }
            let (m, fell_back) = weighted_mean(c);
            fallbacks += fell_back as usize;
            m
        })
        .collect();
    (fused, fallbacks)
}

/// Outcome of fusing per-region vertex images.
pub(crate) struct Integration {
    pub mesh: TriangleMesh,
    /// Vertices owned by no region (kept in place).
    pub orphans: usize,
    /// Vertices whose kept weights were all zero (plain mean used).
    pub zero_weight: usize,
}

/// Weighted fusion of vertex images over every region that owns the vertex.
///
/// Regions without a network contribute the vertex itself. With `top_k`,
/// only the `k` highest-weight images are kept (ties: lower region first).
pub(crate) fn integrate(
    mesh: &TriangleMesh,
    regions: &[LocalRegion],
    jobs: &[Option<LocalJob>],
    top_k: Option<usize>,
) -> Integration {
    let verts = mesh.vertices();
    let mut candidates: Vec<Vec<(f64, usize, Vec3)>> = vec![Vec::new(); verts.len()];
    for (r, (region, job)) in regions.iter().zip(jobs).enumerate() {
        let own: Vec<Vec3> = region.vertex_indices.iter().map(|&v| verts[v]).collect();
        let images = match job {
            Some(job) => job.vertex_images(&own),
            None => own,
        };
        for ((&v, &w), img) in region.vertex_indices.iter().zip(&region.weights).zip(images) {
            candidates[v].push((w, r, img));
        }
    }
    let (mut orphans, mut zero_weight) = (0, 0);
    let vertices = candidates
        .iter_mut()
        .zip(verts)
        .map(|(c, v)| {
            if c.is_empty() {
                orphans += 1;
                return *v;
            }
            if let Some(k) = top_k {
                c.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                c.truncate(k);
            }
            let kept: Vec<(f64, Vec3)> = c.iter().map(|&(w, _, p)| (w, p)).collect();
            let (m, fell_back) = weighted_mean(&kept);
            zero_weight += fell_back as usize;
            m
        })
        .collect();
    Integration {
        mesh: mesh.with_vertices(vertices),
        orphans,
        zero_weight,
    }
}

use super::config::{PipelineConfig, Stage};
use super::{derive_seed, StageReport};
use crate::error::{Error, Result};
use crate::geometry::{fibonacci_sample, PointCloud, TriangleMesh, Vec3};
use crate::nn::{from_flat, normal_penalty, to_flat, Mlp, Trainer};
use crate::transport::SinkhornSolver;

const STAGE_SEED: u64 = 1;

/// Deformed reference mesh with the network that produced it.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub mesh: TriangleMesh,
    pub network: Mlp,
    pub report: StageReport,
}

fn reference_radius(mesh: &TriangleMesh) -> f64 {
    mesh.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max)
}

enum Attempt {
    Done(Mlp, Vec<f64>, Vec<(usize, f64)>),
    Restart(Vec<(usize, f64)>, String),
}

/// Fits the whole reference mesh to the cloud with one network.
///
/// The cloud must already lie strictly inside the reference sphere. Inputs
/// are `|cloud|` spiral samples on the sphere scaled by `beta1`; each epoch
/// pairs every current output with a cloud point by entropic transport and
/// takes one step on the mean pair distance. A network whose mesh image has
/// a non-positive normal penalty is discarded and retrained from a new seed.
pub fn global_mapping(r0: &TriangleMesh, cloud: &PointCloud, cfg: &PipelineConfig) -> Result<StageResult> {
    let radius = reference_radius(r0);
    let max_norm = cloud.points().iter().map(|p| p.norm()).fold(0.0, f64::max);
    if max_norm >= radius {
        return Err(Error::NotEnclosed { max_norm, radius });
    }
    let settings = &cfg.global;
    settings.train.validate()?;
    let n = cloud.len();
    let samples = fibonacci_sample(cfg.beta1 * radius, n).into_points();
    let inputs = to_flat::<f32>(&samples);
    let lattice: Vec<Vec3> = r0.vertices().iter().map(|v| v * cfg.beta1).collect();
    let targets = cloud.points();

    let mut report = StageReport::new(Stage::Global);
    for attempt in 0..=settings.max_restarts {
        let seed = derive_seed(cfg.seed, STAGE_SEED, 0, attempt as u64);
        match train_attempt(r0, &lattice, &inputs, targets, seed, cfg)? {
            Attempt::Done(mlp, losses, penalties) => {
                report.losses = losses;
                report.penalties.extend(penalties);
                report.restarts = attempt;
                let mesh = r0.with_vertices(mlp.forward_points(&lattice));
                return Ok(StageResult {
                    mesh,
                    network: mlp,
                    report,
                });
            }
            Attempt::Restart(penalties, why) => {
                log::warn!("global mapping attempt {attempt} rejected: {why}");
                report.penalties.extend(penalties);
                report.warnings.push(format!("attempt {attempt}: {why}"));
            }
        }
    }
    Err(Error::RestartBudgetExhausted {
        restarts: settings.max_restarts,
    })
}

fn train_attempt(
    r0: &TriangleMesh,
    lattice: &[Vec3],
    inputs: &[f32],
    targets: &[Vec3],
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<Attempt> {
    let settings = &cfg.global;
    let n = targets.len();
    let mut mlp = Mlp::<f32>::new(&cfg.layer_sizes(), cfg.activation, seed);
    let mut trainer = Trainer::new(&mlp, &settings.train);
    let mut solver = SinkhornSolver::new(cfg.sinkhorn);
    let mut losses = Vec::with_capacity(settings.train.epochs);
    let mut penalties = Vec::new();
    let weights = vec![1.0 / n as f64; n];

    for epoch in 0..settings.train.epochs {
        if epoch == 1 {
            solver.params.max_iterations = settings.refresh_iterations;
        }
        let mut failure = None;
        let step = trainer.step_with(&mut mlp, inputs, epoch, |out| {
            let mapped = from_flat(out);
            match solver.correspond(&mapped, targets) {
                Ok(c) => (to_flat(&c.gather(targets)), weights.clone()),
                Err(e) => {
                    failure = Some(e);
                    (out.to_vec(), vec![0.0; n])
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        match step {
            Ok(loss) => losses.push(loss),
            Err(Error::NonFiniteLoss { epoch }) => {
                return Ok(Attempt::Restart(penalties, format!("non-finite loss at epoch {epoch}")));
            }
            Err(e) => return Err(e),
        }
        let done = epoch + 1;
        if done % settings.penalty_interval == 0 && done <= settings.penalty_window {
            let mapped = r0.with_vertices(mlp.forward_points(lattice));
            let penalty = normal_penalty(r0, &mapped);
            log::debug!("epoch {done}: loss {:.5}, normal penalty {:.4}", losses[epoch], penalty.value);
            penalties.push((done, penalty.value));
            if penalty.requires_restart() {
                return Ok(Attempt::Restart(
                    penalties,
                    format!("normal penalty {} at epoch {done}", penalty.value),
                ));
            }
        }
    }
    Ok(Attempt::Done(mlp, losses, penalties))
}

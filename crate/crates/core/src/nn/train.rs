use serde::{Deserialize, Serialize};

use super::mlp::{to_flat, ForwardCache, Mlp};
use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-pair penalty on the output-to-target residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Euclidean norm of the residual (mean distance).
    #[default]
    Norm,
    /// Squared norm (mean squared error).
    SquaredNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Cosine decay from `learning_rate` down to this fraction of it at the
    /// last epoch; 1 keeps the rate constant.
    pub final_lr_fraction: f64,
    pub optimizer: Optimizer,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            optimizer: Optimizer::default(),
            loss: LossKind::Norm,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidInput("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Learning rate used for the update at `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.final_lr_fraction >= 1.0 || self.epochs < 2 {
            return self.learning_rate;
        }
        let t = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        let f = self.final_lr_fraction;
        self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
    }
}

/// Corresponded (input, target) pairs whose mean loss enters with `weight`.
#[derive(Debug, Clone, Copy)]
pub struct PairSet<'a> {
    pub inputs: &'a [Vec3],
    pub targets: &'a [Vec3],
    pub weight: f64,
}

/// Training batch: the concatenation of all non-zero-weight pair sets, with
/// per-row loss weights `weight / |set|`.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub inputs: Vec<T>,
    pub targets: Vec<T>,
    pub row_weights: Vec<f64>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_sets(sets: &[PairSet<'_>]) -> Self {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut row_weights = Vec::new();
        for set in sets {
            assert_eq!(set.inputs.len(), set.targets.len(), "pair set sizes differ");
            if set.weight == 0.0 || set.inputs.is_empty() {
                continue;
            }
            inputs.extend(to_flat::<T>(set.inputs));
            targets.extend(to_flat::<T>(set.targets));
            let w = set.weight / set.inputs.len() as f64;
            row_weights.extend(std::iter::repeat_n(w, set.inputs.len()));
        }
        Self {
            inputs,
            targets,
            row_weights,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_weights.len()
    }
}

/// Loss and its gradient with respect to the outputs.
pub fn loss_and_output_grad<T: Scalar>(
    outputs: &[T],
    targets: &[T],
    row_weights: &[f64],
    kind: LossKind,
) -> (f64, Vec<T>) {
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); outputs.len()];
    for (r, &w) in row_weights.iter().enumerate() {
        let o = &outputs[3 * r..3 * r + 3];
        let t = &targets[3 * r..3 * r + 3];
        let d = [
            o[0].to_f64().unwrap() - t[0].to_f64().unwrap(),
            o[1].to_f64().unwrap() - t[1].to_f64().unwrap(),
            o[2].to_f64().unwrap() - t[2].to_f64().unwrap(),
        ];
        let n2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let g = &mut grad[3 * r..3 * r + 3];
        match kind {
            LossKind::Norm => {
                let n = n2.sqrt();
                loss += w * n;
                if n > 0.0 {
                    for k in 0..3 {
                        g[k] = T::lit(w * d[k] / n);
                    }
                }
            }
            LossKind::SquaredNorm => {
                loss += w * n2;
                for k in 0..3 {
                    g[k] = T::lit(2.0 * w * d[k]);
                }
            }
        }
    }
    (loss, grad)
}

impl<T: Scalar> Mlp<T> {
    /// Weighted loss on a batch and its parameter gradient.
    pub fn loss_and_gradient(&self, batch: &Batch<T>, kind: LossKind) -> (f64, Vec<T>) {
        let cache = self.forward_cached(&batch.inputs);
        let (loss, g) = loss_and_output_grad(cache.output(), &batch.targets, &batch.row_weights, kind);
        (loss, self.backward(&cache, &g))
    }
}

/// Optimizer state bound to one network's parameter layout.
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar> {
    optimizer: Optimizer,
    schedule: TrainConfig,
    loss: LossKind,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(mlp: &Mlp<T>, cfg: &TrainConfig) -> Self {
        Self {
            optimizer: cfg.optimizer,
            schedule: cfg.clone(),
            loss: cfg.loss,
            m: vec![T::zero(); mlp.param_count()],
            v: vec![T::zero(); mlp.param_count()],
            step: 0,
        }
    }

    fn apply(&mut self, mlp: &mut Mlp<T>, grads: &[T], epoch: usize) {
        self.step += 1;
        let lr = self.schedule.learning_rate_at(epoch);
        match self.optimizer {
            Optimizer::Sgd => {
                let lr = T::lit(lr);
                for (p, g) in mlp.params_mut().iter_mut().zip(grads) {
                    *p = *p - lr * *g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let step_size = T::lit(lr * (1.0 - beta2.powi(self.step)).sqrt() / (1.0 - beta1.powi(self.step)));
                let (b1, b2) = (T::lit(beta1), T::lit(beta2));
                let (c1, c2) = (T::one() - b1, T::one() - b2);
                let eps = T::lit(eps);
                for (((p, g), m), v) in mlp
                    .params_mut()
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = b1 * *m + c1 * *g;
                    *v = b2 * *v + c2 * *g * *g;
                    *p = *p - step_size * *m / (v.sqrt() + eps);
                }
            }
        }
    }

    /// One full-batch step on fixed pairs; returns the loss before the update.
    pub fn step(&mut self, mlp: &mut Mlp<T>, batch: &Batch<T>, epoch: usize) -> Result<f64> {
        let (loss, grads) = mlp.loss_and_gradient(batch, self.loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        self.apply(mlp, &grads, epoch);
        if !mlp.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        Ok(loss)
    }

    /// One step where targets are chosen after seeing the current outputs.
    ///
    /// `choose` receives the forward outputs (row-major) and returns the
    /// targets and per-row weights for this step.
    pub fn step_with(
        &mut self,
        mlp: &mut Mlp<T>,
        inputs: &[T],
        epoch: usize,
        choose: impl FnOnce(&[T]) -> (Vec<T>, Vec<f64>),
    ) -> Result<f64> {
        let cache: ForwardCache<T> = mlp.forward_cached(inputs);
        let (targets, weights) = choose(cache.output());
        let (loss, g) = loss_and_output_grad(cache.output(), &targets, &weights, self.loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let grads = mlp.backward(&cache, &g);
        self.apply(mlp, &grads, epoch);
        if !mlp.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_loss: f64,
    pub epochs_run: usize,
    pub losses: Vec<f64>,
    /// Final loss is no higher than the loss ten epochs earlier.
    pub converged: bool,
}

impl TrainReport {
    pub fn from_losses(losses: Vec<f64>) -> Self {
        let n = losses.len();
        let final_loss = losses.last().copied().unwrap_or(f64::NAN);
        let converged = n <= 10 || final_loss <= losses[n - 11];
        Self {
            final_loss,
            epochs_run: n,
            losses,
            converged,
        }
    }
}

/// Trains on fixed corresponded pair sets for `cfg.epochs` epochs.
///
/// Sets with zero weight are dropped before batching, so they cannot affect
/// the parameters. `final_loss` is evaluated after the last update.
pub fn mlp_train<T: Scalar>(mlp: &mut Mlp<T>, sets: &[PairSet<'_>], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let batch = Batch::<T>::from_sets(sets);
    if batch.rows() == 0 {
        return Err(Error::InvalidInput("no training pairs".into()));
    }
    let mut trainer = Trainer::new(mlp, cfg);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        losses.push(trainer.step(mlp, &batch, epoch)?);
    }
    let (final_loss, _) = loss_and_output_grad(
        &mlp.forward_batch(&batch.inputs),
        &batch.targets,
        &batch.row_weights,
        cfg.loss,
    );
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    losses.push(final_loss);
    Ok(TrainReport::from_losses(losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = TrainConfig {
            epochs: 101,
            learning_rate: 2e-3,
            final_lr_fraction: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 2e-3);
        assert!((cfg.learning_rate_at(50) - 1.1e-3).abs() < 1e-15);
        assert!((cfg.learning_rate_at(100) - 2e-4).abs() < 1e-15);
        let flat = TrainConfig::default();
        assert_eq!(flat.learning_rate_at(0), flat.learning_rate_at(999));
    }

    #[test]
    fn memorizes_identity() {
        let pts = random_points(50, 1);
        let mut mlp: Mlp<f32> = Mlp::new(&[3, 64, 64, 3], Activation::Relu, 2);
        let cfg = TrainConfig {
            epochs: 1500,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let rep = mlp_train(
            &mut mlp,
            &[PairSet {
                inputs: &pts,
                targets: &pts,
                weight: 1.0,
            }],
            &cfg,
        )
        .unwrap();
        assert!(rep.final_loss < rep.losses[0]);
        assert!(rep.final_loss < 0.02, "final loss {}", rep.final_loss);
    }

    #[test]
    fn zero_alpha_set_is_inert() {
        let a = random_points(20, 3);
        let b = random_points(20, 4);
        let c = random_points(7, 5);
        let d = random_points(7, 6);
        let cfg = TrainConfig {
            epochs: 25,
            ..TrainConfig::default()
        };
        let init: Mlp<f32> = Mlp::new(&[3, 32, 32, 3], Activation::Relu, 9);
        let mut with = init.clone();
        let mut without = init.clone();
        let first = PairSet {
            inputs: &a,
            targets: &b,
            weight: 1.0,
        };
        let second = PairSet {
            inputs: &c,
            targets: &d,
            weight: 0.0,
        };
        mlp_train(&mut with, &[first, second], &cfg).unwrap();
        mlp_train(&mut without, &[first], &cfg).unwrap();
        assert_eq!(with.params(), without.params());
        assert_ne!(with.params(), init.params());
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let a = random_points(10, 3);
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let init: Mlp<f64> = Mlp::new(&[3, 8, 3], Activation::Relu, 1);
        let mut m = init.clone();
        mlp_train(
            &mut m,
            &[PairSet {
                inputs: &a,
                targets: &a,
                weight: 1.0,
            }],
            &cfg,
        )
        .unwrap();
        assert_eq!(m, init);
    }

    #[test]
    fn seeded_training_is_bit_reproducible() {
        let a = random_points(30, 3);
        let b = random_points(30, 8);
        let run = || {
            let mut m: Mlp<f32> = Mlp::new(&[3, 32, 32, 3], Activation::Relu, 4);
            let rep = mlp_train(
                &mut m,
                &[PairSet {
                    inputs: &a,
                    targets: &b,
                    weight: 1.0,
                }],
                &TrainConfig {
                    epochs: 40,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            (m, rep)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn loss_is_mean_distance() {
        let o: Vec<f64> = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let t: Vec<f64> = vec![3.0, 4.0, 0.0, 1.0, 1.0, 2.0];
        let (l, _) = loss_and_output_grad(&o, &t, &[0.5, 0.5], LossKind::Norm);
        assert!((l - 3.0).abs() < 1e-15);
        let (l2, _) = loss_and_output_grad(&o, &t, &[0.5, 0.5], LossKind::SquaredNorm);
        assert!((l2 - 13.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let a = vec![Vec3::new(1.0, 0.0, 0.0)];
        let t = vec![Vec3::new(f64::MAX, 0.0, 0.0)];
        let mut m: Mlp<f32> = Mlp::new(&[3, 4, 3], Activation::Relu, 0);
        let r = mlp_train(
            &mut m,
            &[PairSet {
                inputs: &a,
                targets: &t,
                weight: 1.0,
            }],
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::NonFiniteLoss { .. })));
    }
}

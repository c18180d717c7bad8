//! Entropic optimal transport between two point sets.
//!
//! Costs are squared Euclidean distances divided by their maximum, marginals
//! are uniform. The solver keeps dual potentials in the log domain and runs
//! cheap multiplicative scaling sweeps on a kernel rebuilt from those
//! potentials, absorbing the scalings back into the potentials whenever they
//! drift far from one. Rows or columns whose kernel mass underflows fall
//! back to an exact log-sum-exp update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkhornParams {
    /// Regularization relative to the normalized (max = 1) cost.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once the max row-marginal violation is at most this.
    pub tolerance: f64,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

/// Dense `rows×cols` transport plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub plan: Vec<f64>,
    pub row_marginal_error: f64,
    pub col_marginal_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.plan[i * self.cols..(i + 1) * self.cols]
    }
}

/// Hard source→target assignment; every source appears once, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub targets: Vec<usize>,
}

impl Correspondence {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets.iter().copied().enumerate()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Target points in source order.
    pub fn gather(&self, targets: &[Vec3]) -> Vec<Vec3> {
        self.targets.iter().map(|&j| targets[j]).collect()
    }
}

/// Dual potentials of a solve (in normalized-cost units).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Potentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Solve {
    pot: Potentials,
    iterations: usize,
    row_err: f64,
    col_err: f64,
    converged: bool,
}

/// Normalized squared-distance cost matrix, row-major `a.len()×b.len()`.
pub fn cost_matrix(a: &[Vec3], b: &[Vec3]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len() * b.len());
    for p in a {
        c.extend(b.iter().map(|q| (p - q).norm_squared()));
    }
    let max = c.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        let inv = 1.0 / max;
        c.iter_mut().for_each(|x| *x *= inv);
    }
    c
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn lse_update(cost: &[f64], n: usize, m: usize, eps: f64, pot: &mut Potentials) {
    let (la, lb) = ((1.0 / n as f64).ln(), (1.0 / m as f64).ln());
    for i in 0..n {
        let row = &cost[i * m..(i + 1) * m];
        let lse = log_sum_exp(row.iter().zip(&pot.g).map(|(c, g)| (g - c) / eps));
        pot.f[i] = eps * (la - lse);
    }
    for j in 0..m {
        let lse = log_sum_exp((0..n).map(|i| (pot.f[i] - cost[i * m + j]) / eps));
        pot.g[j] = eps * (lb - lse);
    }
}

const SCALING_LIMIT: f64 = 1e12;

fn solve(cost: &[f64], n: usize, m: usize, params: &SinkhornParams, warm: Option<Potentials>) -> Result<Solve> {
    let eps = params.epsilon;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let mut pot = match warm {
        Some(p) if p.f.len() == n && p.g.len() == m => p,
        _ => Potentials {
            f: vec![0.0; n],
            g: vec![0.0; m],
        },
    };
    let mut kernel = vec![0.0; n * m];
    let mut kv = vec![0.0; n];
    let mut ktu = vec![0.0; m];
    let mut iterations = 0;
    let mut row_err = f64::INFINITY;
    let mut col_err = f64::INFINITY;

    'outer: loop {
        for i in 0..n {
            let fi = pot.f[i];
            let row = &mut kernel[i * m..(i + 1) * m];
            for ((k, c), g) in row.iter_mut().zip(&cost[i * m..(i + 1) * m]).zip(&pot.g) {
                *k = ((fi + g - c) / eps).exp();
            }
        }
        let mut u = vec![1.0; n];
        let mut v = vec![1.0; m];
        loop {
            for i in 0..n {
                kv[i] = kernel[i * m..(i + 1) * m]
                    .iter()
                    .zip(&v)
                    .map(|(k, v)| k * v)
                    .sum();
            }
            // Columns are exact after any v-update, so the plan is feasible
            // up to the row violation measured here.
            if iterations > 0 {
                row_err = u
                    .iter()
                    .zip(&kv)
                    .map(|(u, s)| (u * s - a).abs())
                    .fold(0.0, f64::max);
                if row_err <= params.tolerance {
                    absorb(&mut pot, &u, &v, eps);
                    return Ok(Solve {
                        pot,
                        iterations,
                        row_err,
                        col_err,
                        converged: true,
                    });
                }
            }
            if iterations >= params.max_iterations {
                absorb(&mut pot, &u, &v, eps);
                break 'outer;
            }
            if kv.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                absorb(&mut pot, &u, &v, eps);
                lse_update(cost, n, m, eps, &mut pot);
                iterations += 1;
                col_err = 0.0;
                continue 'outer;
            }
            for i in 0..n {
                u[i] = a / kv[i];
            }
            ktu.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                let ui = u[i];
                for (t, k) in ktu.iter_mut().zip(&kernel[i * m..(i + 1) * m]) {
                    *t += ui * k;
                }
            }
            if ktu.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                absorb(&mut pot, &u, &v, eps);
                lse_update(cost, n, m, eps, &mut pot);
                iterations += 1;
                col_err = 0.0;
                continue 'outer;
            }
            for j in 0..m {
                v[j] = b / ktu[j];
            }
            col_err = v
                .iter()
                .zip(&ktu)
                .map(|(v, s)| (v * s - b).abs())
                .fold(0.0, f64::max);
            iterations += 1;
            let drift = u
                .iter()
                .chain(&v)
                .any(|s| *s > SCALING_LIMIT || *s < 1.0 / SCALING_LIMIT);
            if drift {
                absorb(&mut pot, &u, &v, eps);
                continue 'outer;
            }
        }
    }
    Ok(Solve {
        pot,
        iterations,
        row_err,
        col_err,
        converged: false,
    })
}

fn absorb(pot: &mut Potentials, u: &[f64], v: &[f64], eps: f64) {
    for (f, u) in pot.f.iter_mut().zip(u) {
        *f += eps * u.ln();
    }
    for (g, v) in pot.g.iter_mut().zip(v) {
        *g += eps * v.ln();
    }
}

fn check_inputs(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("transport needs two non-empty point sets".into()));
    }
    Ok(())
}

/// Entropic transport plan between `a` (rows) and `b` (columns).
pub fn sinkhorn_plan(
    a: &[Vec3],
    b: &[Vec3],
    epsilon: f64,
    max_iterations: usize,
    tolerance: f64,
) -> Result<TransportPlan> {
    check_inputs(a, b)?;
    let params = SinkhornParams {
        epsilon,
        max_iterations,
        tolerance,
    };
    let (n, m) = (a.len(), b.len());
    let cost = cost_matrix(a, b);
    let s = solve(&cost, n, m, &params, None)?;
    let mut plan = Vec::with_capacity(n * m);
    for i in 0..n {
        let fi = s.pot.f[i];
        plan.extend((0..m).map(|j| ((fi + s.pot.g[j] - cost[i * m + j]) / epsilon).exp()));
    }
    for i in 0..n {
        let sum: f64 = plan[i * m..(i + 1) * m].iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::KernelUnderflow { epsilon });
        }
    }
    let row_marginal_error = (0..n)
        .map(|i| (plan[i * m..(i + 1) * m].iter().sum::<f64>() - 1.0 / n as f64).abs())
        .fold(0.0, f64::max);
    let col_marginal_error = (0..m)
        .map(|j| ((0..n).map(|i| plan[i * m + j]).sum::<f64>() - 1.0 / m as f64).abs())
        .fold(0.0, f64::max);
    let _ = (s.row_err, s.col_err);
    Ok(TransportPlan {
        rows: n,
        cols: m,
        plan,
        row_marginal_error,
        col_marginal_error,
        iterations: s.iterations,
        converged: s.converged,
    })
}

/// Per-row argmax of the plan; ties go to the lowest column.
pub fn extract_correspondence(plan: &TransportPlan) -> Correspondence {
    let targets = (0..plan.rows)
        .map(|i| {
            let row = plan.row(i);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Correspondence { targets }
}

/// Reusable solver that warm-starts from the previous potentials when the
/// problem size is unchanged.
#[derive(Debug, Clone, Default)]
pub struct SinkhornSolver {
    pub params: SinkhornParams,
    warm: Option<Potentials>,
    pub last_iterations: usize,
    pub last_row_error: f64,
    pub last_converged: bool,
}

impl SinkhornSolver {
    pub fn new(params: SinkhornParams) -> Self {
        Self {
            params,
            ..Self::default()
        }
    }

    /// Correspondence from `sources` to `targets`, read off the potentials
    /// without materializing the plan (row argmax of `g_j - C_ij`).
    pub fn correspond(&mut self, sources: &[Vec3], targets: &[Vec3]) -> Result<Correspondence> {
        check_inputs(sources, targets)?;
        let (n, m) = (sources.len(), targets.len());
        let cost = cost_matrix(sources, targets);
        let s = solve(&cost, n, m, &self.params, self.warm.take())?;
        if s.pot.f.iter().chain(&s.pot.g).any(|x| !x.is_finite()) {
            return Err(Error::KernelUnderflow {
                epsilon: self.params.epsilon,
            });
        }
        let targets = (0..n)
            .map(|i| {
                let row = &cost[i * m..(i + 1) * m];
                let mut best = (0, f64::NEG_INFINITY);
                for (j, (c, g)) in row.iter().zip(&s.pot.g).enumerate() {
                    let score = g - c;
                    if score > best.1 {
                        best = (j, score);
                    }
                }
                best.0
            })
            .collect();
        self.last_iterations = s.iterations;
        self.last_row_error = s.row_err;
        self.last_converged = s.converged;
        self.warm = Some(s.pot);
        Ok(Correspondence { targets })
    }
}

/// One-shot correspondence with the given parameters.
pub fn correspond(sources: &[Vec3], targets: &[Vec3], params: &SinkhornParams) -> Result<Correspondence> {
    SinkhornSolver::new(*params).correspond(sources, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn single_point_plan() {
        let p = [Vec3::new(1.0, 2.0, 3.0)];
        let plan = sinkhorn_plan(&p, &p, 0.01, 500, 1e-9).unwrap();
        assert_eq!(plan.plan.len(), 1);
        assert!((plan.plan[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_pair_is_diagonal() {
        let p = [Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)];
        let plan = sinkhorn_plan(&p, &p, 0.01, 500, 1e-9).unwrap();
        assert!(plan.get(0, 0) >= 0.49 && plan.get(1, 1) >= 0.49);
        assert_eq!(extract_correspondence(&plan).targets, vec![0, 1]);
    }

    #[test]
    fn random_instance_meets_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(20, &mut rng);
        let b = cloud(20, &mut rng);
        let plan = sinkhorn_plan(&a, &b, 0.05, 5000, 1e-9).unwrap();
        assert!(plan.converged);
        assert!(plan.row_marginal_error < 1e-6 && plan.col_marginal_error < 1e-6);
        assert!(plan.plan.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn argmax_rules() {
        let plan = TransportPlan {
            rows: 2,
            cols: 2,
            plan: vec![0.4, 0.1, 0.1, 0.4],
            row_marginal_error: 0.0,
            col_marginal_error: 0.0,
            iterations: 0,
            converged: true,
        };
        assert_eq!(extract_correspondence(&plan).targets, vec![0, 1]);
        let tie = TransportPlan {
            plan: vec![0.25, 0.25, 0.1, 0.4],
            ..plan
        };
        assert_eq!(extract_correspondence(&tie).targets, vec![0, 1]);
    }

    #[test]
    fn tiny_epsilon_stays_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = cloud(15, &mut rng);
        let b = cloud(15, &mut rng);
        // A plain kernel exp(-C/eps) underflows to zero at this epsilon.
        let plan = sinkhorn_plan(&a, &b, 1e-4, 2000, 1e-9).unwrap();
        assert!(plan.plan.iter().all(|x| x.is_finite() && *x >= 0.0));
        let plan = sinkhorn_plan(&a, &b, 1e-2, 20000, 1e-9).unwrap();
        assert!(plan.converged && plan.row_marginal_error < 1e-8);
    }

    #[test]
    fn warm_start_matches_cold_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = cloud(40, &mut rng);
        let b = cloud(40, &mut rng);
        let params = SinkhornParams {
            epsilon: 0.02,
            max_iterations: 5000,
            tolerance: 1e-10,
        };
        let mut solver = SinkhornSolver::new(params);
        let cold = solver.correspond(&a, &b).unwrap();
        let again = solver.correspond(&a, &b).unwrap();
        assert_eq!(cold, again);
        assert!(solver.last_iterations < 5);
        let plan = sinkhorn_plan(&a, &b, 0.02, 5000, 1e-10).unwrap();
        assert_eq!(extract_correspondence(&plan), cold);
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::poly::{fit_polynomial, PolySurface};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::pipeline::config::BlockSettings;

/// Axis-aligned box of cloud points that one polynomial surface fits within
/// tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub min: Vec3,
    pub max: Vec3,
    /// Sorted indices of the cloud points inside the box.
    pub point_indices: Vec<usize>,
    pub surface: PolySurface,
    pub fit_error: f64,
}

impl Block {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    fn touches(&self, other: &Block, tol: f64) -> bool {
        (0..3).all(|k| self.max[k] + tol >= other.min[k] && other.max[k] + tol >= self.min[k])
    }
}

fn gather(points: &[Vec3], idx: &[usize]) -> Vec<Vec3> {
    idx.iter().map(|&i| points[i]).collect()
}

fn fitted(points: &[Vec3], min: Vec3, max: Vec3, idx: Vec<usize>) -> Result<Block> {
    let (surface, fit_error) = fit_polynomial(&gather(points, &idx))?;
    Ok(Block {
        min,
        max,
        point_indices: idx,
        surface,
        fit_error,
    })
}

/// Buckets point indices into an `n×n×n` grid over `[min, max]`; returns the
/// non-empty cells in lexicographic order with their bounds.
fn grid(points: &[Vec3], idx: &[usize], min: Vec3, max: Vec3, n: usize) -> Vec<(Vec3, Vec3, Vec<usize>)> {
    let size = (max - min) / n as f64;
    let cell = |p: &Vec3, k: usize| -> usize {
        if size[k] > 0.0 {
            (((p[k] - min[k]) / size[k]).floor().max(0.0) as usize).min(n - 1)
        } else {
            0
        }
    };
    let mut cells: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
    for &i in idx {
        let p = &points[i];
        cells.entry((cell(p, 0), cell(p, 1), cell(p, 2))).or_default().push(i);
    }
    let corner = |c: [usize; 3]| Vec3::new(
        if c[0] == n { max.x } else { min.x + size.x * c[0] as f64 },
        if c[1] == n { max.y } else { min.y + size.y * c[1] as f64 },
        if c[2] == n { max.z } else { min.z + size.z * c[2] as f64 },
    );
    cells
        .into_iter()
        .map(|((a, b, c), pts)| (corner([a, b, c]), corner([a + 1, b + 1, c + 1]), pts))
        .collect()
}

/// Splits a failing cell `n2×n2×n2`-wise, raising `n2` until every non-empty
/// sub-cell fits within `tau_e`.
fn refine(points: &[Vec3], cell: Block, tau_e: f64, s: &BlockSettings, id: usize) -> Result<Vec<Block>> {
    if cell.fit_error <= tau_e {
        return Ok(vec![cell]);
    }
    let mut worst = cell.fit_error;
    for n2 in s.n2_start..=s.n2_cap {
        let subs = grid(points, &cell.point_indices, cell.min, cell.max, n2)
            .into_iter()
            .map(|(lo, hi, idx)| fitted(points, lo, hi, idx))
            .collect::<Result<Vec<_>>>()?;
        worst = subs.iter().map(|b| b.fit_error).fold(0.0, f64::max);
        if worst <= tau_e {
            return Ok(subs);
        }
    }
    Err(Error::FitUnreachable {
        block: id,
        tau_e,
        error: worst,
    })
}

fn merged(points: &[Vec3], a: &Block, b: &Block) -> Result<Block> {
    let mut idx: Vec<usize> = a.point_indices.iter().chain(&b.point_indices).copied().collect();
    idx.sort_unstable();
    idx.dedup();
    fitted(points, a.min.inf(&b.min), a.max.sup(&b.max), idx)
}

/// Greedy merging: repeatedly merge the touching pair whose joint fit has the
/// smallest error, while that error stays within `tau_e`.
fn merge_fixpoint(points: &[Vec3], blocks: Vec<Block>, tau_e: f64, tol: f64) -> Result<Vec<Block>> {
    let mut slots: Vec<Option<Block>> = blocks.into_iter().map(Some).collect();
    // Candidate merges keyed by slot pair; failed fits are remembered too.
    let mut cache: BTreeMap<(usize, usize), Option<Block>> = BTreeMap::new();
    let consider = |slots: &[Option<Block>], cache: &mut BTreeMap<(usize, usize), Option<Block>>, i: usize| -> Result<()> {
        let a = slots[i].as_ref().expect("live slot");
        for (j, b) in slots.iter().enumerate() {
            let Some(b) = b else { continue };
            if j == i || !a.touches(b, tol) {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if cache.contains_key(&key) {
                continue;
            }
            let m = merged(points, a, b)?;
            cache.insert(key, (m.fit_error <= tau_e).then_some(m));
        }
        Ok(())
    };
    for i in 0..slots.len() {
        consider(&slots, &mut cache, i)?;
    }
    loop {
        let best = cache
            .iter()
            .filter_map(|(k, m)| m.as_ref().map(|m| (m.fit_error, *k)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, (i, j))) = best else { break };
        let m = cache.remove(&(i, j)).flatten().expect("candidate present");
        slots[i] = None;
        slots[j] = None;
        cache.retain(|&(a, b), _| a != i && a != j && b != i && b != j);
        slots.push(Some(m));
        let k = slots.len() - 1;
        consider(&slots, &mut cache, k)?;
    }
    Ok(slots.into_iter().flatten().collect())
}

/// Partitions the cloud into blocks that each admit a polynomial fit within
/// `tau_e`, merges neighbours while the fit allows, then enlarges every block
/// about its centre so neighbours overlap.
///
/// After enlargement each block's `point_indices` lists every cloud point
/// inside its enlarged box; `surface` and `fit_error` describe the fit before
/// enlargement.
pub fn build_blocks(cloud: &PointCloud, tau_e: f64, settings: &BlockSettings) -> Result<Vec<Block>> {
    if !(tau_e > 0.0) {
        return Err(Error::InvalidInput(format!("tau_e must be positive, got {tau_e}")));
    }
    let points = cloud.points();
    let (min, max) = cloud.bounding_box();
    let all: Vec<usize> = (0..points.len()).collect();
    let mut blocks = Vec::new();
    for (id, (lo, hi, idx)) in grid(points, &all, min, max, settings.n1).into_iter().enumerate() {
        let cell = fitted(points, lo, hi, idx)?;
        blocks.extend(refine(points, cell, tau_e, settings, id)?);
    }
    let tol = 1e-12 * (max - min).norm().max(f64::MIN_POSITIVE);
    let blocks = merge_fixpoint(points, blocks, tau_e, tol)?;
    Ok(blocks
        .into_iter()
        .map(|mut b| {
            let c = (b.min + b.max) / 2.0;
            let half = (b.max - b.min) / 2.0 * settings.enlargement;
            b.min = c - half;
            b.max = c + half;
            b.point_indices = all.iter().copied().filter(|&i| b.contains(&points[i])).collect();
            b
        })
        .filter(|b| !b.point_indices.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_cloud(n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.2))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn plane_collapses_to_one_block() {
        let blocks = build_blocks(&plane_cloud(400), 1e-6, &BlockSettings::default()).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].point_indices.len(), 400);
    }

    #[test]
    fn infinite_tolerance_merges_everything() {
        let cloud = crate::fixtures::sphere_cloud(1.0, 500);
        let blocks = build_blocks(&cloud, f64::INFINITY, &BlockSettings::default()).unwrap();
        assert_eq!(blocks.len(), 1);
    }

    #[test]
    fn sphere_blocks_cover_fit_and_are_maximal() {
        let cloud = crate::fixtures::sphere_cloud(1.0, 800);
        let tau = 0.01;
        let settings = BlockSettings::default();
        let blocks = build_blocks(&cloud, tau, &settings).unwrap();
        assert!(blocks.len() > 1);
        for b in &blocks {
            assert!(b.fit_error <= tau);
        }
        for (i, p) in cloud.points().iter().enumerate() {
            assert!(blocks.iter().any(|b| b.point_indices.contains(&i) && b.contains(p)));
        }
    }

    #[test]
    fn merge_stops_with_no_mergeable_pair() {
        let cloud = crate::fixtures::ellipsoid_cloud(1.0, 600);
        let points = cloud.points();
        let (tau, settings) = (0.004, BlockSettings::default());
        let (min, max) = cloud.bounding_box();
        let all: Vec<usize> = (0..points.len()).collect();
        let mut cells = Vec::new();
        for (id, (lo, hi, idx)) in grid(points, &all, min, max, settings.n1).into_iter().enumerate() {
            cells.extend(refine(points, fitted(points, lo, hi, idx).unwrap(), tau, &settings, id).unwrap());
        }
        let before = cells.len();
        let tol = 1e-12 * (max - min).norm();
        let blocks = merge_fixpoint(points, cells, tau, tol).unwrap();
        assert!(blocks.len() < before);
        for (i, a) in blocks.iter().enumerate() {
            assert!(a.fit_error <= tau);
            for b in &blocks[i + 1..] {
                if a.touches(b, tol) {
                    assert!(merged(points, a, b).unwrap().fit_error > tau);
                }
            }
        }
    }
}

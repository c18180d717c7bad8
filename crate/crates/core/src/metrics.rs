//! Shape-recovery metrics and the point-noise model.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh, Vec3};
use crate::spatial::{closest_point_on_triangle, TriangleBvh};

/// Distance from `p` to the closed triangle, and whether the triangle was
/// degenerate (zero area).
pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> (f64, bool) {
    let [a, b, c] = tri;
    let degenerate = (b - a).cross(&(c - a)).norm_squared() == 0.0;
    ((p - closest_point_on_triangle(p, a, b, c)).norm(), degenerate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmReport {
    pub distance: f64,
    /// Mean distance from the reconstruction's vertices to the truth surface.
    pub mean_r_to_g: f64,
    /// Mean distance from the truth's vertices to the reconstruction surface.
    pub mean_g_to_r: f64,
    /// d(v, G) for every vertex of the reconstruction.
    pub per_vertex: Vec<f64>,
}

fn distances_to(points: &[Vec3], surface: &TriangleMesh) -> Vec<f64> {
    let bvh = TriangleBvh::from_mesh(surface);
    points
        .par_iter()
        .map(|p| bvh.closest(p).expect("mesh has patches").distance)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Point-to-mesh distance between a reconstruction `r` and a ground truth `g`:
/// the average of the two mean vertex-to-surface distances.
pub fn pm_distance(r: &TriangleMesh, g: &TriangleMesh) -> PmReport {
    assert!(r.patch_count() > 0 && g.patch_count() > 0, "pm_distance needs non-empty meshes");
    let per_vertex = distances_to(r.vertices(), g);
    let mean_r_to_g = mean(&per_vertex);
    let mean_g_to_r = mean(&distances_to(g.vertices(), r));
    PmReport {
        distance: 0.5 * (mean_r_to_g + mean_g_to_r),
        mean_r_to_g,
        mean_g_to_r,
        per_vertex,
    }
}

/// Mean distance from `points` to the surface of `mesh`.
pub fn mean_distance_to(points: &[Vec3], mesh: &TriangleMesh) -> f64 {
    mean(&distances_to(points, mesh))
}

/// Uniform perturbation of a fraction of the points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Percentage of points perturbed, in [0, 100].
    pub delta: f64,
    /// Half-width of the per-coordinate offset range.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.delta) {
            return Err(Error::InvalidInput(format!("delta must lie in [0, 100], got {}", self.delta)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Number of points perturbed in a cloud of `n`.
    pub fn affected(&self, n: usize) -> usize {
        ((self.delta * n as f64 / 100.0).ceil() as usize).min(n)
    }
}

/// Moves `⌈delta·n/100⌉` distinct random points by independent per-coordinate
/// offsets drawn from `U[-sigma, sigma]`.
pub fn add_noise(cloud: &PointCloud, spec: &NoiseSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut points = cloud.points().to_vec();
    let k = spec.affected(points.len());
    if k == 0 || spec.sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen = sample(&mut rng, points.len(), k).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        for c in 0..3 {
            points[i][c] += rng.random_range(-spec.sigma..=spec.sigma);
        }
    }
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;

    fn square(z: f64) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, z),
                Vec3::new(1.0, 0.0, z),
                Vec3::new(1.0, 1.0, z),
                Vec3::new(0.0, 1.0, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn point_in_triangle_plane() {
        let tri = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        let (d, flag) = point_triangle_distance(&Vec3::new(0.2, 0.2, 0.0), &tri);
        assert!(d < 1e-15 && !flag);
        let (d, _) = point_triangle_distance(&Vec3::new(0.2, 0.2, 0.7), &tri);
        assert!((d - 0.7).abs() < 1e-15);
    }

    #[test]
    fn degenerate_triangle_flagged() {
        let tri = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        let (d, flag) = point_triangle_distance(&Vec3::new(1.0, 1.0, 0.0), &tri);
        assert!(flag);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_meshes_are_zero() {
        let m = build_icosphere(4, 1.0);
        assert_eq!(pm_distance(&m, &m).distance, 0.0);
    }

    #[test]
    fn parallel_squares() {
        let r = pm_distance(&square(0.0), &square(0.3));
        assert!((r.distance - 0.3).abs() < 1e-12);
    }

    #[test]
    fn noise_counts_and_bounds() {
        let pts: Vec<Vec3> = (0..2500).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let cloud = PointCloud::new(pts).unwrap();
        let spec = NoiseSpec {
            delta: 20.0,
            sigma: 1.0,
            seed: 9,
        };
        let noisy = add_noise(&cloud, &spec).unwrap();
        let moved = cloud
            .points()
            .iter()
            .zip(noisy.points())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(moved, 500);
        for (a, b) in cloud.points().iter().zip(noisy.points()) {
            assert!((a - b).amax() <= 1.0);
        }
        assert_eq!(add_noise(&cloud, &spec).unwrap(), noisy);
    }

    #[test]
    fn zero_noise_is_identity() {
        let cloud = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0); 10]).unwrap();
        for (delta, sigma) in [(0.0, 5.0), (100.0, 0.0)] {
            let out = add_noise(&cloud, &NoiseSpec { delta, sigma, seed: 1 }).unwrap();
            assert_eq!(out, cloud);
        }
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LocalRegion, PointCloud, TriangleMesh, Vec3};
use crate::error::{Error, Result};
use crate::spatial::{KdTree, TriangleBvh};

/// `count` points spread quasi-uniformly over the sphere of `radius` about
/// the origin (golden-angle spiral).
pub fn fibonacci_sample(radius: f64, count: usize) -> PointCloud {
    assert!(count >= 1, "count must be at least 1");
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let n = count as f64;
    let points = (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let theta = golden * i as f64;
            Vec3::new(r * theta.cos(), r * theta.sin(), z) * radius
        })
        .collect();
    PointCloud::new(points).expect("fibonacci points are finite")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    pub iterations: usize,
    pub seed: u64,
    /// Quadrature points per generator used to approximate cell centroids.
    pub quadrature_per_point: usize,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            iterations: 10,
            seed: 0,
            quadrature_per_point: 30,
        }
    }
}

/// Centroidal-Voronoi sampling of a region's surface with default seed.
pub fn lloyd_sample(
    mesh: &TriangleMesh,
    region: &LocalRegion,
    count: usize,
    iterations: usize,
) -> Result<PointCloud> {
    lloyd_sample_with(
        mesh,
        region,
        count,
        &LloydOptions {
            iterations,
            ..LloydOptions::default()
        },
    )
}

struct Surface {
    triangles: Vec<[Vec3; 3]>,
    cumulative: Vec<f64>,
    total: f64,
}

impl Surface {
    fn new(triangles: Vec<[Vec3; 3]>) -> Result<Self> {
        let mut total = 0.0;
        let cumulative = triangles
            .iter()
            .map(|t| {
                total += 0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm();
                total
            })
            .collect();
        if !(total > 0.0) {
            return Err(Error::ZeroArea);
        }
        Ok(Self {
            triangles,
            cumulative,
            total,
        })
    }

    fn area(&self, k: usize) -> f64 {
        self.cumulative[k] - if k == 0 { 0.0 } else { self.cumulative[k - 1] }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        let target = rng.random::<f64>() * self.total;
        let k = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.triangles.len() - 1);
        let [a, b, c] = self.triangles[k];
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
    }
}

/// Area-uniform random points on the given patches.
pub fn random_surface_sample(
    mesh: &TriangleMesh,
    patches: &[usize],
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec3>> {
    let surface = Surface::new(patches.iter().map(|&p| mesh.triangle(p)).collect())?;
    Ok((0..count).map(|_| surface.sample(rng)).collect())
}

/// Centroids of the `s²` congruent sub-triangles of `t`.
fn subtriangle_centroids(t: &[Vec3; 3], s: usize, out: &mut Vec<Vec3>) {
    let [a, b, c] = *t;
    let (u, v) = ((b - a) / s as f64, (c - a) / s as f64);
    let g = |i: usize, j: usize| a + u * i as f64 + v * j as f64;
    for i in 0..s {
        for j in 0..(s - i) {
            out.push((g(i, j) + g(i + 1, j) + g(i, j + 1)) / 3.0);
            if i + j + 1 < s {
                out.push((g(i + 1, j) + g(i + 1, j + 1) + g(i, j + 1)) / 3.0);
            }
        }
    }
}

/// Centroidal-Voronoi (Lloyd) sampling of the region's patches.
///
/// Generators start area-uniform. Each iteration moves every generator to
/// the area centroid of its restricted Voronoi cell, approximated by a fixed
/// deterministic quadrature, and then back onto the nearest surface point.
pub fn lloyd_sample_with(
    mesh: &TriangleMesh,
    region: &LocalRegion,
    count: usize,
    opts: &LloydOptions,
) -> Result<PointCloud> {
    assert!(count >= 1, "count must be at least 1");
    let surface = Surface::new(region.patch_indices.iter().map(|&p| mesh.triangle(p)).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seeds: Vec<Vec3> = (0..count).map(|_| surface.sample(&mut rng)).collect();
    if opts.iterations == 0 {
        return PointCloud::new(seeds);
    }

    let budget = (opts.quadrature_per_point * count).max(64) as f64;
    let mut quad = Vec::new();
    let mut quad_weight = Vec::new();
    for (k, t) in surface.triangles.iter().enumerate() {
        let area = surface.area(k);
        if area <= 0.0 {
            continue;
        }
        let s = ((budget * area / surface.total).sqrt().ceil() as usize).max(1);
        let before = quad.len();
        subtriangle_centroids(t, s, &mut quad);
        let w = area / (s * s) as f64;
        quad_weight.resize(before + (quad.len() - before), w);
    }

    let projector = TriangleBvh::new(surface.triangles.clone());
    for _ in 0..opts.iterations {
        let tree = KdTree::new(&seeds);
        let mut sum = vec![Vec3::zeros(); count];
        let mut mass = vec![0.0; count];
        for (q, &w) in quad.iter().zip(&quad_weight) {
            let (owner, _) = tree.nearest(q).expect("seeds are non-empty");
            sum[owner] += q * w;
            mass[owner] += w;
        }
        for (k, seed) in seeds.iter_mut().enumerate() {
            if mass[k] > 0.0 {
                let centroid = sum[k] / mass[k];
                *seed = projector.closest(&centroid).expect("surface is non-empty").point;
            }
        }
    }
    PointCloud::new(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;

    fn whole(mesh: &TriangleMesh) -> LocalRegion {
        LocalRegion {
            vertex_indices: (0..mesh.vertex_count()).collect(),
            patch_indices: (0..mesh.patch_count()).collect(),
            weights: vec![1.0; mesh.vertex_count()],
            anchor: None,
        }
    }

    fn nearest_neighbour_distances(pts: &[Vec3]) -> Vec<f64> {
        pts.iter()
            .enumerate()
            .map(|(i, p)| {
                pts.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn fibonacci_single_point() {
        let c = fibonacci_sample(2.5, 1);
        assert_eq!(c.len(), 1);
        assert!((c.points()[0].norm() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fibonacci_is_on_sphere_and_even() {
        let c = fibonacci_sample(1.0, 1000);
        assert!(c.points().iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
        let nn = nearest_neighbour_distances(c.points());
        let mean = nn.iter().sum::<f64>() / nn.len() as f64;
        let var = nn.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nn.len() as f64;
        assert!(var.sqrt() / mean < 0.5, "cv = {}", var.sqrt() / mean);
    }

    #[test]
    fn single_point_lands_on_centroid() {
        let mesh = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.5, 2.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let c = lloyd_sample(&mesh, &whole(&mesh), 1, 1).unwrap();
        let centroid = mesh.vertices().iter().sum::<Vec3>() / 3.0;
        assert!((c.points()[0] - centroid).norm() < 1e-9);
    }

    #[test]
    fn planar_region_stays_planar() {
        let mesh = TriangleMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let c = lloyd_sample(&mesh, &whole(&mesh), 100, 10).unwrap();
        assert_eq!(c.len(), 100);
        assert!(c.points().iter().all(|p| p.z.abs() < 1e-12));
    }

    #[test]
    fn relaxation_spreads_points_better_than_random() {
        let sphere = build_icosphere(12, 1.0);
        let mut hemi = whole(&sphere);
        hemi.vertex_indices.retain(|&v| sphere.vertices()[v].z >= 0.0);
        hemi.weights.truncate(hemi.vertex_indices.len());
        hemi.patch_indices = LocalRegion::closed_patches(&sphere, &hemi.vertex_indices);

        let opts = LloydOptions {
            iterations: 10,
            seed: 5,
            ..LloydOptions::default()
        };
        let relaxed = lloyd_sample_with(&sphere, &hemi, 200, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random = random_surface_sample(&sphere, &hemi.patch_indices, 200, &mut rng).unwrap();
        let min_relaxed = nearest_neighbour_distances(relaxed.points())
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let min_random = nearest_neighbour_distances(&random)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(min_relaxed > min_random, "{min_relaxed} vs {min_random}");
    }

    #[test]
    fn zero_area_region_is_rejected() {
        let mesh = TriangleMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(
            lloyd_sample(&mesh, &whole(&mesh), 3, 2),
            Err(Error::ZeroArea)
        ));
    }
}

//! Analytic test shapes: point clouds and matching ground-truth meshes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{build_icosphere, fibonacci_sample, PointCloud, TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Ellipsoid,
    Box,
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Shape::Sphere),
            "ellipsoid" => Ok(Shape::Ellipsoid),
            "box" => Ok(Shape::Box),
            other => Err(format!("unsupported shape '{other}' (expected sphere, ellipsoid or box)")),
        }
    }
}

/// Semi-axes of the ellipsoid fixture, relative to its scale.
pub const ELLIPSOID_AXES: [f64; 3] = [1.0, 0.7, 0.5];
/// Half-extents of the box fixture, relative to its scale.
pub const BOX_HALF_EXTENTS: [f64; 3] = [1.0, 0.75, 0.5];

const TRUTH_FREQUENCY: usize = 48;

pub fn sphere_cloud(radius: f64, count: usize) -> PointCloud {
    fibonacci_sample(radius, count)
}

pub fn ellipsoid_cloud(scale: f64, count: usize) -> PointCloud {
    let [a, b, c] = ELLIPSOID_AXES;
    fibonacci_sample(1.0, count).map(|p| Vec3::new(a * p.x, b * p.y, c * p.z) * scale)
}

/// Area-uniform random points on the six faces of the box fixture.
pub fn box_cloud(scale: f64, count: usize, seed: u64) -> PointCloud {
    let h = Vec3::from(BOX_HALF_EXTENTS) * scale;
    let face_area = [h.y * h.z, h.x * h.z, h.x * h.y];
    let total: f64 = face_area.iter().sum::<f64>() * 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 0;
            while axis < 2 && pick >= 2.0 * face_area[axis] {
                pick -= 2.0 * face_area[axis];
                axis += 1;
            }
            let side = if pick < face_area[axis] { -1.0 } else { 1.0 };
            let mut p = Vec3::zeros();
            for k in 0..3 {
                p[k] = if k == axis {
                    side * h[k]
                } else {
                    rng.random_range(-h[k]..=h[k])
                };
            }
            p
        })
        .collect();
    PointCloud::new(points).expect("box points are finite")
}

pub fn cloud(shape: Shape, scale: f64, count: usize, seed: u64) -> PointCloud {
    match shape {
        Shape::Sphere => sphere_cloud(scale, count),
        Shape::Ellipsoid => ellipsoid_cloud(scale, count),
        Shape::Box => box_cloud(scale, count, seed),
    }
}

/// Fine triangulation of the fixture surface, used as ground truth.
pub fn truth_mesh(shape: Shape, scale: f64) -> TriangleMesh {
    match shape {
        Shape::Sphere => build_icosphere(TRUTH_FREQUENCY, scale),
        Shape::Ellipsoid => {
            let [a, b, c] = ELLIPSOID_AXES;
            build_icosphere(TRUTH_FREQUENCY, scale).map_vertices(|v| Vec3::new(a * v.x, b * v.y, c * v.z))
        }
        Shape::Box => box_mesh(scale, 16),
    }
}

/// Axis-aligned box surface with an `n×n` quad grid per face.
pub fn box_mesh(scale: f64, n: usize) -> TriangleMesh {
    let h = Vec3::from(BOX_HALF_EXTENTS) * scale;
    let mut vertices = Vec::new();
    let mut patches = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [-1.0, 1.0] {
            let base = vertices.len();
            for i in 0..=n {
                for j in 0..=n {
                    let mut p = Vec3::zeros();
                    p[axis] = side * h[axis];
                    p[u] = h[u] * (2.0 * i as f64 / n as f64 - 1.0);
                    p[v] = h[v] * (2.0 * j as f64 / n as f64 - 1.0);
                    vertices.push(p);
                }
            }
            let id = |i: usize, j: usize| base + i * (n + 1) + j;
            for i in 0..n {
                for j in 0..n {
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    if side > 0.0 {
                        patches.push([a, b, c]);
                        patches.push([a, c, d]);
                    } else {
                        patches.push([a, c, b]);
                        patches.push([a, d, c]);
                    }
                }
            }
        }
    }
    TriangleMesh::new(vertices, patches).expect("box mesh is valid")
}

/// Drops every point within `half_angle` (radians) of `axis`, seen from the
/// cloud centroid.
pub fn remove_cap(cloud: &PointCloud, axis: &Vec3, half_angle: f64) -> Option<PointCloud> {
    let c = cloud.centroid();
    let axis = axis.normalize();
    let cos = half_angle.cos();
    let kept: Vec<Vec3> = cloud
        .points()
        .iter()
        .filter(|p| {
            let d = *p - c;
            let n = d.norm();
            n == 0.0 || d.dot(&axis) / n < cos
        })
        .copied()
        .collect();
    PointCloud::new(kept).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_norms_equal() {
        let c = sphere_cloud(2.0, 2500);
        assert_eq!(c.len(), 2500);
        assert!(c.points().iter().all(|p| (p.norm() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn box_points_on_faces() {
        let c = box_cloud(1.0, 2500, 3);
        let h = Vec3::from(BOX_HALF_EXTENTS);
        for p in c.points() {
            let on_face = (0..3).any(|k| (p[k].abs() - h[k]).abs() < 1e-12);
            let inside = (0..3).all(|k| p[k].abs() <= h[k] + 1e-12);
            assert!(on_face && inside);
        }
    }

    #[test]
    fn box_mesh_is_closed_surface() {
        let m = box_mesh(1.0, 4);
        // Grid seams duplicate vertices, so check patch count and orientation only.
        assert_eq!(m.patch_count(), 6 * 4 * 4 * 2);
        for p in 0..m.patch_count() {
            let t = m.triangle(p);
            let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
            assert!(n.dot(&((t[0] + t[1] + t[2]) / 3.0)) > 0.0);
        }
    }

    #[test]
    fn cap_removal() {
        let c = sphere_cloud(1.0, 2000);
        let kept = remove_cap(&c, &Vec3::z(), std::f64::consts::FRAC_PI_6).unwrap();
        assert!(kept.len() < c.len());
        assert!(kept.points().iter().all(|p| p.z < (std::f64::consts::FRAC_PI_6).cos() + 1e-2));
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("box".parse::<Shape>(), Ok(Shape::Box));
        assert!("torus".parse::<Shape>().is_err());
    }
}

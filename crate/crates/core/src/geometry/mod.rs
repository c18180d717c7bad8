//! Meshes, clouds, and the spherical reference mesh.

mod icosphere;
pub mod io;
mod normals;
mod partition;
mod sampling;

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use icosphere::{build_icosphere, icosahedron, icosphere_frequency, ICOSAHEDRON_FACES};
pub use normals::{patch_normal, vertex_normals};
pub use partition::{partition_coarse, select_anchors, ANCHOR_COUNT};
pub use sampling::{fibonacci_sample, lloyd_sample, lloyd_sample_with, random_surface_sample, LloydOptions};

/// 3D coordinates in millimetres.
pub type Vec3 = Vector3<f64>;

/// Triangle mesh with shared, immutable connectivity.
///
/// Deformations produce new meshes through [`TriangleMesh::with_vertices`],
/// which keeps the same patch list allocation so connectivity equality is
/// cheap to assert.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    patches: Arc<Vec<[usize; 3]>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, patches: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((i, p)) = patches
            .iter()
            .enumerate()
            .find(|(_, p)| p.iter().any(|&k| k >= n))
        {
            return Err(Error::InvalidInput(format!(
                "patch {i} {p:?} references a vertex outside 0..{n}"
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("vertex {i} is not finite")));
        }
        Ok(Self {
            vertices,
            patches: Arc::new(patches),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn patches(&self) -> &[[usize; 3]] {
        &self.patches
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn triangle(&self, patch: usize) -> [Vec3; 3] {
        let [a, b, c] = self.patches[patch];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Same connectivity, new coordinates.
    ///
    /// Panics if the vertex count changes.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Self {
        assert_eq!(
            vertices.len(),
            self.vertices.len(),
            "deformation must preserve the vertex count"
        );
        Self {
            vertices,
            patches: Arc::clone(&self.patches),
        }
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        self.with_vertices(self.vertices.iter().map(f).collect())
    }

    pub fn same_connectivity(&self, other: &TriangleMesh) -> bool {
        Arc::ptr_eq(&self.patches, &other.patches) || self.patches == other.patches
    }

    /// Mesh with every patch winding reversed.
    pub fn flipped(&self) -> Self {
        let patches = self.patches.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self {
            vertices: self.vertices.clone(),
            patches: Arc::new(patches),
        }
    }

    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .patches
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(x, y)| (x.min(y), x.max(y)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.patch_count() as i64
    }

    pub fn patch_area(&self, patch: usize) -> f64 {
        let [a, b, c] = self.triangle(patch);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounds_of(&self.vertices)
    }
}

/// Unordered 3D points; never empty, always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn centroid(&self) -> Vec3 {
        centroid_of(&self.points)
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounds_of(&self.points)
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
        }
    }
}

/// A subset of reference-mesh vertices and patches with per-vertex fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRegion {
    pub vertex_indices: Vec<usize>,
    pub patch_indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub anchor: Option<usize>,
}

impl LocalRegion {
    pub fn len(&self) -> usize {
        self.vertex_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_indices.is_empty()
    }

    pub fn weight_of(&self, vertex: usize) -> Option<f64> {
        self.vertex_indices
            .binary_search(&vertex)
            .ok()
            .map(|k| self.weights[k])
    }

    pub fn contains(&self, vertex: usize) -> bool {
        self.vertex_indices.binary_search(&vertex).is_ok()
    }

    /// Patches whose three vertices all belong to `vertex_indices` (sorted).
    pub(crate) fn closed_patches(mesh: &TriangleMesh, sorted_vertices: &[usize]) -> Vec<usize> {
        let mut member = vec![false; mesh.vertex_count()];
        for &v in sorted_vertices {
            member[v] = true;
        }
        mesh.patches()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.iter().all(|&v| member[v]))
            .map(|(i, _)| i)
            .collect()
    }

    /// The region's patches re-indexed into a standalone mesh.
    pub fn submesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        let vertices = self
            .vertex_indices
            .iter()
            .map(|&v| mesh.vertices()[v])
            .collect();
        let patches = self
            .patch_indices
            .iter()
            .map(|&p| {
                mesh.patches()[p].map(|v| {
                    self.vertex_indices
                        .binary_search(&v)
                        .expect("region patch vertex missing from region")
                })
            })
            .collect();
        TriangleMesh::new(vertices, patches).expect("submesh indices are valid")
    }
}

/// Unit-length direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    /// Normalizes `v`; `None` for zero or non-finite input.
    pub fn new(v: Vec3) -> Option<Self> {
        let n = v.norm();
        (n.is_finite() && n > 1e-300).then(|| Self(v / n))
    }

    pub fn get(&self) -> Vec3 {
        self.0
    }

    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0.dot(&other.0)
    }
}

impl std::ops::Neg for UnitVector3 {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

pub fn centroid_of(points: &[Vec3]) -> Vec3 {
    if points.is_empty() {
        return Vec3::zeros();
    }
    points.iter().sum::<Vec3>() / points.len() as f64
}

pub fn bounds_of(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

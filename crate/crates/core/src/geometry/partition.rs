use super::icosphere::{icosahedron, icosphere_frequency, ICOSAHEDRON_FACES};
use super::{LocalRegion, TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub const ANCHOR_COUNT: usize = 32;

fn ray_distance(p: &Vec3, dir: &Vec3) -> f64 {
    let t = p.dot(dir);
    if t <= 0.0 {
        p.norm()
    } else {
        (p - dir * t).norm()
    }
}

/// The 32 anchor vertices: the 12 icosahedron corners followed by, for each
/// of the 20 icosahedron faces, the vertex closest to the ray from the origin
/// through the face centroid.
///
/// Distances are compared after normalizing vertices to the unit sphere, so
/// the result is scale invariant. Ties break toward the lower index. Anchors
/// are pairwise distinct for frequency ≥ 3; at lower frequencies face anchors
/// coincide with corner or edge vertices.
pub fn select_anchors(mesh: &TriangleMesh) -> Result<Vec<usize>> {
    icosphere_frequency(mesh)?;
    let base = icosahedron();
    let dirs: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .map(|v| {
            let n = v.norm();
            if n > 0.0 {
                v / n
            } else {
                *v
            }
        })
        .collect();

    let mut anchors: Vec<usize> = (0..12).collect();
    for [a, b, c] in ICOSAHEDRON_FACES {
        let ray = (base[a] + base[b] + base[c]).normalize();
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, d) in dirs.iter().enumerate() {
            let dist = ray_distance(d, &ray);
            if dist < best.0 - 1e-12 {
                best = (dist, i);
            }
        }
        anchors.push(best.1);
    }
    Ok(anchors)
}

/// Central angle between two vectors, in radians.
pub(crate) fn central_angle(a: &Vec3, b: &Vec3) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0).acos()
}

/// Splits the reference mesh into one cap per anchor.
///
/// A vertex joins cap `i` when its central angle θ to anchor `i` is below
/// `tau_a`, with fusion weight `1 - θ/tau_a`. A patch joins when all three of
/// its vertices do.
pub fn partition_coarse(
    mesh: &TriangleMesh,
    anchors: &[usize],
    tau_a: f64,
) -> Result<Vec<LocalRegion>> {
    if !(tau_a > 0.0) {
        return Err(Error::InvalidInput(format!("tau_a must be positive, got {tau_a}")));
    }
    let verts = mesh.vertices();
    let mut covered = vec![false; verts.len()];
    let mut regions = Vec::with_capacity(anchors.len());
    for &anchor in anchors {
        let a = verts
            .get(anchor)
            .ok_or_else(|| Error::InvalidInput(format!("anchor {anchor} out of range")))?;
        let mut vertex_indices = Vec::new();
        let mut weights = Vec::new();
        for (i, v) in verts.iter().enumerate() {
            let theta = central_angle(v, a);
            if theta < tau_a {
                vertex_indices.push(i);
                weights.push(1.0 - theta / tau_a);
                covered[i] = true;
            }
        }
        let patch_indices = LocalRegion::closed_patches(mesh, &vertex_indices);
        regions.push(LocalRegion {
            vertex_indices,
            patch_indices,
            weights,
            anchor: Some(anchor),
        });
    }
    let uncovered = covered.iter().filter(|c| !**c).count();
    if uncovered > 0 {
        return Err(Error::Coverage { uncovered, tau_a });
    }
    Ok(regions)
}

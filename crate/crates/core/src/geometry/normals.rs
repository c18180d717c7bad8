use super::{TriangleMesh, UnitVector3, Vec3};

/// Unnormalized patch normal (twice the area, oriented by winding).
pub fn patch_normal(tri: &[Vec3; 3]) -> Vec3 {
    (tri[1] - tri[0]).cross(&(tri[2] - tri[0]))
}

/// Area-weighted vertex normals. `None` where every incident patch is
/// degenerate (or the vertex has no patches).
pub fn vertex_normals(mesh: &TriangleMesh) -> Vec<Option<UnitVector3>> {
    let mut acc = vec![Vec3::zeros(); mesh.vertex_count()];
    for (p, idx) in mesh.patches().iter().enumerate() {
        let n = patch_normal(&mesh.triangle(p));
        for &v in idx {
            acc[v] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let scale = n.amax();
            if scale < 1e-300 {
                None
            } else {
                UnitVector3::new(n / scale)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;

    #[test]
    fn sphere_normals_are_radial() {
        let m = build_icosphere(8, 1.0);
        for (v, n) in m.vertices().iter().zip(vertex_normals(&m)) {
            let n = n.unwrap().get();
            assert!((n - v.normalize()).norm() < 1e-2);
        }
    }

    #[test]
    fn flipped_winding_negates() {
        let m = build_icosphere(4, 2.0);
        let a = vertex_normals(&m);
        let b = vertex_normals(&m.flipped());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.unwrap().get() + y.unwrap().get()).norm() < 1e-12);
        }
    }

    #[test]
    fn ellipsoid_normals_follow_the_gradient() {
        let (ax, by, cz) = (1.0, 0.7, 0.5);
        let m = build_icosphere(16, 1.0).map_vertices(|v| Vec3::new(v.x * ax, v.y * by, v.z * cz));
        let max_angle = m
            .vertices()
            .iter()
            .zip(vertex_normals(&m))
            .map(|(p, n)| {
                let grad = Vec3::new(p.x / (ax * ax), p.y / (by * by), p.z / (cz * cz)).normalize();
                n.unwrap().get().dot(&grad).clamp(-1.0, 1.0).acos().to_degrees()
            })
            .fold(0.0, f64::max);
        assert!(max_angle < 2.0, "max deviation {max_angle}°");
    }

    #[test]
    fn isolated_and_degenerate_vertices_have_no_normal() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0, Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(vertex_normals(&m).iter().all(Option::is_none));
    }
}

use crate::geometry::{patch_normal, vertex_normals, TriangleMesh, UnitVector3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyReport {
    /// Mean inner product of unit normals before and after the mapping.
    pub value: f64,
    /// Items skipped because a normal was undefined on either side.
    pub excluded: usize,
}

impl PenaltyReport {
    /// Deformation judged flipped or twisted.
    pub fn requires_restart(&self) -> bool {
        !(self.value > 0.0)
    }
}

fn mean_dot(pairs: impl Iterator<Item = (Option<UnitVector3>, Option<UnitVector3>)>) -> PenaltyReport {
    let (mut sum, mut count, mut excluded) = (0.0, 0usize, 0usize);
    for pair in pairs {
        match pair {
            (Some(a), Some(b)) => {
                sum += a.dot(&b);
                count += 1;
            }
            _ => excluded += 1,
        }
    }
    PenaltyReport {
        value: if count > 0 { sum / count as f64 } else { f64::NAN },
        excluded,
    }
}

/// Normal penalty over vertices: mean of `n_before · n_after`.
pub fn normal_penalty(before: &TriangleMesh, after: &TriangleMesh) -> PenaltyReport {
    assert!(
        before.same_connectivity(after),
        "normal penalty needs identical connectivity"
    );
    mean_dot(vertex_normals(before).into_iter().zip(vertex_normals(after)))
}

/// Normal penalty over sampled points: each sample carries the normal of its
/// nearest patch before mapping and of the same patch after mapping.
pub fn sampled_normal_penalty(
    before: &TriangleMesh,
    after: &TriangleMesh,
    sample_patches: &[usize],
) -> PenaltyReport {
    assert!(
        before.same_connectivity(after),
        "normal penalty needs identical connectivity"
    );
    let normal = |m: &TriangleMesh, p: usize| UnitVector3::new(patch_normal(&m.triangle(p)));
    let before_n: Vec<_> = (0..before.patch_count()).map(|p| normal(before, p)).collect();
    let after_n: Vec<_> = (0..after.patch_count()).map(|p| normal(after, p)).collect();
    mean_dot(sample_patches.iter().map(|&p| (before_n[p], after_n[p])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_icosphere, Vec3};

    #[test]
    fn identity_scores_one() {
        let m = build_icosphere(6, 1.0);
        let r = normal_penalty(&m, &m);
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.excluded, 0);
    }

    #[test]
    fn mirror_image_requires_restart() {
        // A mirror turns the surface inside out: n' = -(M n), so the mean
        // inner product on the unit sphere is E[z² - x² - y²] = -1/3.
        let m = build_icosphere(6, 1.0);
        let r = normal_penalty(&m, &m.map_vertices(|v| Vec3::new(v.x, v.y, -v.z)));
        assert!((r.value + 1.0 / 3.0).abs() < 0.02, "{}", r.value);
        assert!(r.requires_restart());
    }

    #[test]
    fn gentle_radial_field_scores_high() {
        let m = build_icosphere(12, 1.0);
        let bumped = m.map_vertices(|v| v * (1.0 + 0.05 * (3.0 * v.x).sin() * (2.0 * v.y).cos()));
        let r = normal_penalty(&m, &bumped);
        assert!(r.value > 0.9, "{}", r.value);
    }

    #[test]
    fn sampled_penalty_uses_patch_normals() {
        let m = build_icosphere(3, 1.0);
        let mirrored = m.map_vertices(|v| Vec3::new(v.x, v.y, -v.z));
        let samples: Vec<usize> = (0..m.patch_count()).collect();
        assert!((sampled_normal_penalty(&m, &m, &samples).value - 1.0).abs() < 1e-12);
        let r = sampled_normal_penalty(&m, &mirrored, &samples);
        assert!((r.value + 1.0 / 3.0).abs() < 0.05, "{}", r.value);
        // Only the listed patches count.
        let top: Vec<usize> = (0..m.patch_count())
            .filter(|&p| m.triangle(p).iter().all(|v| v.z > 0.9))
            .collect();
        assert!(sampled_normal_penalty(&m, &mirrored, &top).value > 0.8);
    }

    #[test]
    fn degenerate_vertices_are_excluded() {
        let m = build_icosphere(2, 1.0);
        let collapsed = m.map_vertices(|_| crate::geometry::Vec3::zeros());
        let r = normal_penalty(&m, &collapsed);
        assert_eq!(r.excluded, m.vertex_count());
        assert!(r.requires_restart());
    }
}

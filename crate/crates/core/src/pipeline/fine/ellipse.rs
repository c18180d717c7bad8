use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

/// Ellipse in a 2D plane: `{x : |(x - center)·axes[k]| / semi_axes[k] ...}`
/// with elliptic radius `sqrt(Σ ((x - c)·a_k / s_k)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Orthonormal principal directions.
    pub axes: [[f64; 2]; 2],
    pub semi_axes: [f64; 2],
}

impl Ellipse {
    pub fn radius(&self, x: [f64; 2]) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        (0..2)
            .map(|k| {
                let t = (d[0] * self.axes[k][0] + d[1] * self.axes[k][1]) / self.semi_axes[k];
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    fn from_shape(center: Vector2<f64>, shape: Matrix2<f64>) -> Option<Self> {
        // (x-c)^T shape (x-c) <= 1
        let eig = SymmetricEigen::new(shape);
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return None;
        }
        let col = |k: usize| [eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]];
        Some(Self {
            center: [center.x, center.y],
            axes: [col(0), col(1)],
            semi_axes: [1.0 / eig.eigenvalues[0].sqrt(), 1.0 / eig.eigenvalues[1].sqrt()],
        })
    }
}

/// Minimum-volume enclosing ellipse (Khachiyan's algorithm), rescaled so the
/// farthest point lies exactly on the boundary. `None` when the points do
/// not span the plane.
pub fn min_volume_ellipse(points: &[[f64; 2]], tolerance: f64, max_iterations: usize) -> Option<Ellipse> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let mean = points.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p[0], p[1])) / n as f64;
    let cov = points.iter().fold(Matrix2::zeros(), |acc, p| {
        let v = Vector2::new(p[0], p[1]) - mean;
        acc + v * v.transpose()
    });
    let ev = SymmetricEigen::new(cov).eigenvalues;
    if !(ev.min() > 1e-12 * ev.max()) {
        return None;
    }
    let q: Vec<nalgebra::Vector3<f64>> = points.iter().map(|p| nalgebra::Vector3::new(p[0], p[1], 1.0)).collect();
    let d = 2.0;
    let mut u = vec![1.0 / n as f64; n];
    for _ in 0..max_iterations {
        let x: Matrix3<f64> = q.iter().zip(&u).fold(Matrix3::zeros(), |acc, (qi, &ui)| acc + qi * qi.transpose() * ui);
        let xi = x.try_inverse()?;
        let (j, mj) = q
            .iter()
            .map(|qi| (qi.transpose() * xi * qi)[0])
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        let step = (mj - d - 1.0) / ((d + 1.0) * (mj - 1.0));
        if !step.is_finite() {
            return None;
        }
        for (k, uk) in u.iter_mut().enumerate() {
            *uk *= 1.0 - step;
            if k == j {
                *uk += step;
            }
        }
        if step.abs() < tolerance {
            break;
        }
    }
    let c = points
        .iter()
        .zip(&u)
        .fold(Vector2::zeros(), |acc, (p, &w)| acc + Vector2::new(p[0], p[1]) * w);
    let spread = points.iter().zip(&u).fold(Matrix2::zeros(), |acc, (p, &w)| {
        let v = Vector2::new(p[0], p[1]);
        acc + v * v.transpose() * w
    }) - c * c.transpose();
    let shape = spread.try_inverse()? / d;
    let reach = points
        .iter()
        .map(|p| {
            let v = Vector2::new(p[0], p[1]) - c;
            (v.transpose() * shape * v)[0]
        })
        .fold(0.0, f64::max);
    if !(reach > 0.0) {
        return None;
    }
    Ellipse::from_shape(c, shape / reach)
}

/// Ellipse for point sets too thin for a proper fit: principal axes of the
/// points, half-extents along them, each at least `min_semi_axis`.
pub fn fallback_ellipse(points: &[[f64; 2]], min_semi_axis: f64) -> Ellipse {
    let n = points.len().max(1) as f64;
    let c = points.iter().fold(Vector2::zeros(), |acc, p| acc + Vector2::new(p[0], p[1])) / n;
    let cov = points.iter().fold(Matrix2::zeros(), |acc, p| {
        let v = Vector2::new(p[0], p[1]) - c;
        acc + v * v.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let axes = [
        [eig.eigenvectors[(0, 0)], eig.eigenvectors[(1, 0)]],
        [eig.eigenvectors[(0, 1)], eig.eigenvectors[(1, 1)]],
    ];
    let mut semi = [min_semi_axis; 2];
    for p in points {
        let v = [p[0] - c.x, p[1] - c.y];
        for k in 0..2 {
            semi[k] = semi[k].max((v[0] * axes[k][0] + v[1] * axes[k][1]).abs() * std::f64::consts::SQRT_2);
        }
    }
    Ellipse {
        center: [c.x, c.y],
        axes,
        semi_axes: semi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_corners_give_circumcircle() {
        let pts = [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
        let e = min_volume_ellipse(&pts, 1e-10, 10_000).unwrap();
        for s in e.semi_axes {
            assert!((s - 2f64.sqrt()).abs() < 1e-6, "{s}");
        }
        assert!(e.center[0].abs() < 1e-9 && e.center[1].abs() < 1e-9);
    }

    #[test]
    fn encloses_every_point_exactly() {
        let pts: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.7;
                [3.0 * t.cos() + 0.2 * (3.0 * t).sin(), 0.8 * t.sin()]
            })
            .collect();
        let e = min_volume_ellipse(&pts, 1e-7, 1000).unwrap();
        let max = pts.iter().map(|p| e.radius(*p)).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-9, "{max}");
        assert!(e.semi_axes[0].max(e.semi_axes[1]) >= 3.0 - 1e-6);
    }

    #[test]
    fn collinear_points_need_fallback() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        assert!(min_volume_ellipse(&pts, 1e-7, 1000).is_none());
        let e = fallback_ellipse(&pts, 0.1);
        assert!(e.semi_axes.iter().all(|&s| s >= 0.1));
        for p in pts {
            assert!(e.radius(p) <= 1.0 + 1e-12);
        }
    }
}

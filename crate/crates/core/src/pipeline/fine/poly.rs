use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid_of, Vec3};

pub const DEGREE: usize = 5;
pub const TERMS: usize = (DEGREE + 1) * (DEGREE + 2) / 2;

/// Height field `w = h(u, v)` of total degree 5 over a local PCA frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySurface {
    pub origin: Vec3,
    /// In-plane axes `u`, `v` and the normal `w` (least-variance direction).
    pub axes: [Vec3; 3],
    /// `(u, v)` are divided by this before evaluating the monomials.
    pub scale: f64,
    /// Coefficients of `u^a v^b`, ordered by total degree, then by `b`.
    pub coefficients: Vec<f64>,
    /// Bounding rectangle of the fitted points in `(u, v)`.
    pub footprint: [[f64; 2]; 2],
}

fn monomials(u: f64, v: f64, out: &mut [f64]) {
    let mut k = 0;
    for d in 0..=DEGREE {
        for b in 0..=d {
            out[k] = u.powi((d - b) as i32) * v.powi(b as i32);
            k += 1;
        }
    }
}

impl PolySurface {
    /// Coordinates `(u, v, w)` of a point in the surface frame.
    pub fn to_frame(&self, p: &Vec3) -> [f64; 3] {
        let d = p - self.origin;
        [d.dot(&self.axes[0]), d.dot(&self.axes[1]), d.dot(&self.axes[2])]
    }

    pub fn height(&self, u: f64, v: f64) -> f64 {
        let mut m = [0.0; TERMS];
        monomials(u / self.scale, v / self.scale, &mut m);
        m.iter().zip(&self.coefficients).map(|(a, c)| a * c).sum()
    }

    /// The surface point above `(u, v)`, in world coordinates.
    pub fn point(&self, u: f64, v: f64) -> Vec3 {
        self.origin + self.axes[0] * u + self.axes[1] * v + self.axes[2] * self.height(u, v)
    }

    /// Out-of-plane residual `|h(u_p, v_p) - w_p|`.
    pub fn residual(&self, p: &Vec3) -> f64 {
        let [u, v, w] = self.to_frame(p);
        (self.height(u, v) - w).abs()
    }
}

fn pca_frame(points: &[Vec3], origin: &Vec3) -> [Vec3; 3] {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - origin;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let u: Vec3 = eig.eigenvectors.column(order[0]).into();
    let w: Vec3 = eig.eigenvectors.column(order[2]).into();
    let v = w.cross(&u);
    [u, v, w]
}

/// Least-squares degree-5 height field through `points` in their PCA frame,
/// and its fit error: the largest out-of-plane residual.
///
/// With fewer points than coefficients the normal equations get a ridge of
/// `1e-8 · trace / 21`, which picks a near-interpolating solution.
pub fn fit_polynomial(points: &[Vec3]) -> Result<(PolySurface, f64)> {
    if points.is_empty() {
        return Err(Error::Fit("no points".into()));
    }
    let origin = centroid_of(points);
    let axes = pca_frame(points, &origin);
    let local: Vec<[f64; 3]> = points
        .iter()
        .map(|p| {
            let d = p - origin;
            [d.dot(&axes[0]), d.dot(&axes[1]), d.dot(&axes[2])]
        })
        .collect();
    let scale = local.iter().map(|q| q[0].abs().max(q[1].abs())).fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let n = points.len();
    let mut a = DMatrix::zeros(n, TERMS);
    let mut row = [0.0; TERMS];
    for (i, q) in local.iter().enumerate() {
        monomials(q[0] / scale, q[1] / scale, &mut row);
        for (k, x) in row.iter().enumerate() {
            a[(i, k)] = *x;
        }
    }
    let w = DVector::from_iterator(n, local.iter().map(|q| q[2]));
    let coefficients = if n >= TERMS {
        let svd = a.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        svd.solve(&w, tol).map_err(|e| Error::Fit(e.to_string()))?
    } else {
        let ata = a.transpose() * &a;
        let lambda = 1e-8 * ata.trace() / TERMS as f64;
        let reg = ata + DMatrix::identity(TERMS, TERMS) * lambda;
        reg.cholesky()
            .ok_or_else(|| Error::Fit("regularized normal equations are singular".into()))?
            .solve(&(a.transpose() * &w))
    };
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Fit("non-finite coefficients".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for q in &local {
        for k in 0..2 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    let surface = PolySurface {
        origin,
        axes,
        scale,
        coefficients: coefficients.iter().copied().collect(),
        footprint: [lo, hi],
    };
    let error = points.iter().map(|p| surface.residual(p)).fold(0.0, f64::max);
    Ok((surface, error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plane_fits_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = Vec3::new(1.0, -2.0, 0.5).normalize();
        let t = n.cross(&Vec3::x()).normalize();
        let s = n.cross(&t);
        let pts: Vec<Vec3> = (0..30)
            .map(|_| Vec3::new(3.0, 1.0, -2.0) + t * rng.random_range(-1.0..1.0) + s * rng.random_range(-1.0..1.0))
            .collect();
        let (surf, err) = fit_polynomial(&pts).unwrap();
        assert!(err < 1e-9, "{err}");
        assert!(surf.coefficients.iter().all(|c| c.abs() < 1e-9));
        assert!(surf.axes[2].cross(&n).norm() < 1e-9);
    }

    #[test]
    fn paraboloid_is_captured() {
        // A symmetric grid keeps the PCA normal on the paraboloid's axis.
        let pts: Vec<Vec3> = (-10..=10)
            .flat_map(|i| (-10..=10).map(move |j| (i as f64 / 10.0, j as f64 / 10.0)))
            .filter(|(x, y)| x * x + y * y <= 1.0)
            .map(|(x, y)| Vec3::new(x, y, x * x + y * y))
            .collect();
        let (surf, err) = fit_polynomial(&pts).unwrap();
        assert!(err < 1e-9, "{err}");
        assert!(surf.axes[2].cross(&Vec3::z()).norm() < 1e-9);
    }

    #[test]
    fn few_points_are_interpolated() {
        let pts = [Vec3::new(0.0, 0.0, 0.1), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.3), Vec3::new(1.0, 1.0, -0.2), Vec3::new(0.5, 0.2, 0.9)];
        let (surf, err) = fit_polynomial(&pts).unwrap();
        assert!(err < 1e-5, "{err}");
        assert!(surf.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn single_point() {
        let (surf, err) = fit_polynomial(&[Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(err, 0.0);
        assert!((surf.point(0.0, 0.0) - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
    }
}

//! Inner products and small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

/// Inner product on coefficient vectors. Implementations must be symmetric
/// and positive semi-definite; the operators used by the models are SPD.
pub trait InnerProduct: Sync {
    fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64;

    fn norm(&self, a: &DVector<f64>) -> f64 {
        self.dot(a, a).max(0.0).sqrt()
    }
}

/// Plain Euclidean dot product (used e.g. on generalized coordinates of an
/// orthonormal basis, where it coincides with the field inner product).
pub struct EuclideanIp;

impl InnerProduct for EuclideanIp {
    fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(b)
    }
}

/// Inner product induced by an SPD operator: `(a, b) = aᵀ M b`.
pub struct MatrixIp<'a> {
    matrix: &'a DMatrix<f64>,
}

impl<'a> MatrixIp<'a> {
    pub fn new(matrix: &'a DMatrix<f64>) -> Self {
        Self { matrix }
    }
}

impl InnerProduct for MatrixIp<'_> {
    fn dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&(self.matrix * b))
    }
}

/// Minimum-norm least-squares solution of `a x ≈ b` via SVD
/// (pseudo-inverse semantics; handles rank deficiency).
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = f64::EPSILON * smax * (a.nrows().max(a.ncols()) as f64);
    svd.solve(b, eps)
        .expect("SVD solve with computed factors")
        .column(0)
        .into_owned()
}

/// Twice-iterated Gram-Schmidt of `v` against an orthonormal `basis` in the
/// given inner product. Returns the residual (not normalized).
pub fn orthogonalize_twice(
    basis: &[DVector<f64>],
    v: &DVector<f64>,
    ip: &dyn InnerProduct,
) -> DVector<f64> {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = ip.dot(q, &r);
            r.axpy(-c, q, 1.0);
        }
    }
    r
}

/// Squared projection residual of `v` onto the span of an orthonormal basis:
/// `‖v‖² − Σ (v, qᵢ)²`, clamped at zero.
pub fn projection_residual_sq(
    basis: &[DVector<f64>],
    v: &DVector<f64>,
    ip: &dyn InnerProduct,
) -> f64 {
    let mut s = ip.dot(v, v);
    for q in basis {
        let c = ip.dot(q, v);
        s -= c * c;
    }
    s.max(0.0)
}

/// Sines of the principal angles between span(a) and span(b), both given as
/// orthonormal bases in `ip`. Uses the projection-residual form, which stays
/// accurate for angles near zero.
pub fn principal_angle_sines(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    ip: &dyn InnerProduct,
) -> Vec<f64> {
    b.iter()
        .map(|v| {
            let r = orthogonalize_twice(a, v, ip);
            ip.norm(&r).min(1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_norm_on_rank_deficient_system() {
        // Two identical columns: LS solutions form a line; SVD picks the
        // minimum-norm representative with equal split.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_row_slice(&[1.0, 2.0]);
        let x = lstsq_min_norm(&a, &b);
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orthogonalize_removes_span_component() {
        let q = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        let v = DVector::from_row_slice(&[3.0, 4.0, 0.0]);
        let r = orthogonalize_twice(&[q], &v, &EuclideanIp);
        assert!(r[0].abs() < 1e-14);
        assert!((r[1] - 4.0).abs() < 1e-14);
    }
}

//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, SymmetricEigen};

/// Relative threshold below which a symmetric positive semi-definite matrix is
/// treated as singular: `λ_min < SINGULAR_RTOL · λ_max`.
pub const SINGULAR_RTOL: f64 = 1e-10;

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// `0.5 (S + Sᵀ)`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// `(λ_min, λ_max)` of the symmetrized matrix.
pub fn eigen_extremes(s: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(s));
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Sum of squared entries.
pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Horizontal concatenation `[left right]`.
pub fn hconcat(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.nrows(), right.nrows(), "hconcat row mismatch");
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols())
        .copy_from(right);
    out
}

/// Block-diagonal `diag(a, b)`.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let m = a.ncols() + b.ncols();
    let mut out = DMatrix::zeros(n, m);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, -1.0, 0.0]);
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(0, 0)), 0.0);
    }

    #[test]
    fn block_helpers_place_blocks() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let b = DMatrix::from_element(1, 1, 2.0);
        let d = block_diag(&a, &b);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
        let h = hconcat(&a, &DMatrix::from_element(2, 1, 5.0));
        assert_eq!(h.shape(), (2, 3));
        assert_eq!(h[(1, 2)], 5.0);
    }
}

//! Thin bridge between `ndarray` (the public matrix type) and `faer` (dense
//! products and symmetric eigendecompositions). faer is built without its
//! rayon feature so every product here runs sequentially and is bit-identical
//! regardless of the caller's thread pool.

use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// `a * b`
pub(crate) fn matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let fa = to_faer(a);
    let fb = to_faer(b);
    from_faer((&fa * &fb).as_ref())
}

/// `aᵀ a`
pub(crate) fn gram_cols(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let fa = to_faer(a);
    symmetrize(from_faer((fa.transpose() * &fa).as_ref()))
}

/// `a aᵀ`
pub(crate) fn gram_rows(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let fa = to_faer(a);
    symmetrize(from_faer((&fa * fa.transpose()).as_ref()))
}

pub(crate) fn symmetrize(mut a: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in non-increasing
/// order with eigenvectors as matching columns.
pub(crate) fn sym_eigen_desc(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension(format!("eigendecomposition of a {}x{} matrix", n, a.ncols())));
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let fa = to_faer(a);
    let evd = fa
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigendecomposition did not converge: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values = Array1::from_shape_fn(n, |k| s[n - 1 - k]);
    let vectors = Array2::from_shape_fn((n, n), |(i, k)| u[(i, n - 1 - k)]);
    Ok((values, vectors))
}

/// Flip each column so its largest-magnitude entry is positive (first index
/// wins on exact ties).
pub(crate) fn fix_column_signs(basis: &mut Array2<f64>) {
    for mut col in basis.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Inverse of a symmetric positive-definite matrix through its
/// eigendecomposition. Fails when the smallest eigenvalue is not positive.
pub(crate) fn spd_inverse(a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (values, vectors) = sym_eigen_desc(a)?;
    let n = values.len();
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if n == 0 || !(min > max * 1e-15) || min <= 0.0 {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (eigenvalue range [{min:e}, {max:e}])"
        )));
    }
    let mut scaled = vectors.clone();
    for (k, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v / values[k]);
    }
    Ok(symmetrize(matmul(scaled.view(), vectors.t())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_is_descending_and_reconstructs() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]];
        let (vals, vecs) = sym_eigen_desc(a.view()).unwrap();
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let mut recon = Array2::<f64>::zeros((3, 3));
        for k in 0..3 {
            let c = vecs.column(k);
            for i in 0..3 {
                for j in 0..3 {
                    recon[[i, j]] += vals[k] * c[i] * c[j];
                }
            }
        }
        for (x, y) in recon.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_inverse_of_diagonal() {
        let a = array![[2.0, 0.0], [0.0, 4.0]];
        let inv = spd_inverse(a.view()).unwrap();
        assert!((inv[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((inv[[1, 1]] - 0.25).abs() < 1e-15);
        assert!(spd_inverse(array![[1.0, 1.0], [1.0, 1.0]].view()).is_err());
    }

    #[test]
    fn sign_convention() {
        let mut b = array![[0.1, 0.5], [-0.9, -0.2]];
        fix_column_signs(&mut b);
        assert_eq!(b, array![[-0.1, 0.5], [0.9, -0.2]]);
    }
}

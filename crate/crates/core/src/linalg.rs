//! Shared dense linear-algebra helpers.
//!
//! `nalgebra` supplies the matrix type and small factorizations (SVD,
//! Cholesky); the `matrixmultiply` GEMM kernel is used for every large
//! product because it is an order of magnitude faster than naive loops at the
//! sizes the Poisson solver reaches. `DMatrix` storage is column-major, so
//! its buffer can be handed to `matrixmultiply` directly.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

/// `c = alpha * op(a) * op(b) + beta * c`, where `op` optionally transposes.
///
/// Panics on shape mismatch: this is an internal kernel and callers are
/// expected to have validated dimensions.
pub fn dgemm(alpha: f64, a: &Mat, ta: bool, b: &Mat, tb: bool, beta: f64, c: &mut Mat) {
    let (m, k) = if ta {
        (a.ncols(), a.nrows())
    } else {
        (a.nrows(), a.ncols())
    };
    let (kb, n) = if tb {
        (b.ncols(), b.nrows())
    } else {
        (b.nrows(), b.ncols())
    };
    assert_eq!(k, kb, "gemm inner dimensions differ: {k} vs {kb}");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        *c *= beta;
        return;
    }
    // Column-major p x q buffer: row stride 1, column stride p. A transposed
    // view swaps the logical dimensions, making the strides (p, 1).
    let (rsa, csa) = if ta {
        (a.nrows() as isize, 1)
    } else {
        (1, a.nrows() as isize)
    };
    let (rsb, csb) = if tb {
        (b.nrows() as isize, 1)
    } else {
        (1, b.nrows() as isize)
    };
    let rsc = 1;
    let csc = c.nrows() as isize;
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_slice().as_ptr(),
            rsa,
            csa,
            b.as_slice().as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_slice().as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// `op(a) * op(b)` into a fresh matrix.
pub fn mul(a: &Mat, ta: bool, b: &Mat, tb: bool) -> Mat {
    let m = if ta { a.ncols() } else { a.nrows() };
    let n = if tb { b.nrows() } else { b.ncols() };
    let mut c = Mat::zeros(m, n);
    dgemm(1.0, a, ta, b, tb, 0.0, &mut c);
    c
}

/// Gram matrix `x^T x`.
pub fn gram(x: &Mat) -> Mat {
    mul(x, true, x, false)
}

/// Horizontal concatenation of equally tall blocks.
pub fn hcat(blocks: &[&Mat]) -> Mat {
    assert!(!blocks.is_empty(), "hcat of zero blocks");
    let rows = blocks[0].nrows();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation of two equally wide blocks.
pub fn vcat(top: &Mat, bottom: &Mat) -> Mat {
    assert_eq!(top.ncols(), bottom.ncols(), "vcat column mismatch");
    let mut out = Mat::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Moore-Penrose pseudoinverse via SVD; singular values below
/// `rtol * sigma_max` are treated as zero.
pub fn pinv(a: &Mat, rtol: f64) -> Result<Mat> {
    if a.is_empty() {
        return Err(Error::Usage("pinv of an empty matrix".into()));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(
            "pinv input contains non-finite entries".into(),
        ));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = if smax > 0.0 { rtol * smax } else { rtol };
    svd.pseudo_inverse(eps)
        .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))
}

/// True when every entry is finite.
pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_eq(a: &Mat, b: &Mat, tol: f64) -> bool {
        a.nrows() == b.nrows()
            && a.ncols() == b.ncols()
            && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn gemm_matches_nalgebra_in_all_transpose_modes() {
        let a = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.3 - 1.0);
        let b = Mat::from_fn(3, 5, |i, j| (i as f64 - j as f64) * 0.7);
        assert!(approx_eq(&mul(&a, false, &b, false), &(&a * &b), 1e-12));
        assert!(approx_eq(
            &mul(&a, true, &a, false),
            &(a.transpose() * &a),
            1e-12
        ));
        assert!(approx_eq(
            &mul(&b, false, &b, true),
            &(&b * b.transpose()),
            1e-12
        ));
        assert!(approx_eq(
            &mul(&b, true, &a, true),
            &(b.transpose() * a.transpose()),
            1e-12
        ));
    }

    #[test]
    fn gemm_accumulates_with_alpha_and_beta() {
        let a = Mat::from_fn(3, 2, |i, j| (i + j) as f64);
        let b = Mat::from_fn(2, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0));
        let mut c = Mat::from_element(3, 3, 2.0);
        dgemm(0.5, &a, false, &b, false, -1.0, &mut c);
        let want = 0.5 * (&a * &b) - Mat::from_element(3, 3, 2.0);
        assert!(approx_eq(&c, &want, 1e-12));
    }

    #[test]
    fn pinv_of_identity_is_identity() {
        let i3 = Mat::identity(3, 3);
        assert!(approx_eq(&pinv(&i3, 1e-12).unwrap(), &i3, 1e-12));
    }

    #[test]
    fn pinv_of_rank_deficient_diagonal() {
        let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0]));
        let want = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.0]));
        assert!(approx_eq(&pinv(&a, 1e-12).unwrap(), &want, 1e-14));
    }

    #[test]
    fn hcat_vcat_roundtrip_shapes() {
        let a = Mat::from_element(2, 3, 1.0);
        let b = Mat::from_element(2, 2, 2.0);
        let h = hcat(&[&a, &b]);
        assert_eq!((h.nrows(), h.ncols()), (2, 5));
        assert_eq!(h[(1, 4)], 2.0);
        let v = vcat(&a, &Mat::from_element(1, 3, 3.0));
        assert_eq!((v.nrows(), v.ncols()), (3, 3));
        assert_eq!(v[(2, 0)], 3.0);
    }
}

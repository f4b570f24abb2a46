//! Dense kernels shared by the estimators. Products go through `matrixmultiply`
//! so transposed operands are handled by strides instead of copies.

use nalgebra::DMatrix;

/// `alpha * a * b^T` for column-major `a` (r×k) and `b` (c×k).
pub fn mul_nt(a: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols(), "inner dimensions differ");
    let (r, k, c) = (a.nrows(), a.ncols(), b.nrows());
    let mut out = DMatrix::<f64>::zeros(r, c);
    if r == 0 || c == 0 || k == 0 {
        return out;
    }
    unsafe {
        matrixmultiply::dgemm(
            r,
            k,
            c,
            alpha,
            a.as_ptr(),
            1,
            r as isize,
            b.as_ptr(),
            c as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            1,
            r as isize,
        );
    }
    out
}

/// `alpha * a * b` for column-major operands.
pub fn mul_nn(a: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let (r, k, c) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = DMatrix::<f64>::zeros(r, c);
    if r == 0 || c == 0 || k == 0 {
        return out;
    }
    unsafe {
        matrixmultiply::dgemm(
            r,
            k,
            c,
            alpha,
            a.as_ptr(),
            1,
            r as isize,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            r as isize,
        );
    }
    out
}

/// `alpha * a^T * b` for column-major `a` (k×r) and `b` (k×c).
pub fn mul_tn(a: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "inner dimensions differ");
    let (k, r, c) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = DMatrix::<f64>::zeros(r, c);
    if r == 0 || c == 0 || k == 0 {
        return out;
    }
    unsafe {
        matrixmultiply::dgemm(
            r,
            k,
            c,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            r as isize,
        );
    }
    out
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Frobenius norm of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let d = m[(i, j)] - m[(j, i)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

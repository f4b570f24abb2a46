//! Dense reference computations shared by the integration tests and the
//! acceptance runner. They use plain loops and textbook factorizations so that
//! they share no code path with the library's whitening solvers.
#![allow(dead_code)]

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use ranndy::rng::NormalStream;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut n = NormalStream::from_seed(seed);
    DMatrix::from_fn(rows, cols, |_, _| n.sample())
}

/// `(C00, C01, C11)` by explicit sums over samples.
pub fn naive_covariances(psi0: &DMatrix<f64>, psi1: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = psi0.shape();
    let mut c00 = DMatrix::zeros(n, n);
    let mut c01 = DMatrix::zeros(n, n);
    let mut c11 = DMatrix::zeros(n, n);
    for k in 0..m {
        for i in 0..n {
            for j in 0..n {
                c00[(i, j)] += psi0[(i, k)] * psi0[(j, k)];
                c01[(i, j)] += psi0[(i, k)] * psi1[(j, k)];
                c11[(i, j)] += psi1[(i, k)] * psi1[(j, k)];
            }
        }
    }
    let s = 1.0 / m as f64;
    (c00 * s, c01 * s, c11 * s)
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Eigenvalues of `A v = λ B v` for symmetric `A` and positive definite `B`,
/// by Cholesky reduction `L⁻¹ A L⁻ᵀ`. Descending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let l = b.clone().cholesky().expect("B must be positive definite").l();
    let linv = l.clone().try_inverse().expect("invertible Cholesky factor");
    let reduced = &linv * a * linv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    sorted_desc(SymmetricEigen::new(reduced).eigenvalues.iter().copied().collect())
}

/// Real parts of the eigenvalues of `C00⁻¹ C01 C11⁻¹ C10` from a general
/// (Schur) eigensolve. Descending.
pub fn forward_backward_eigenvalues(c00: &DMatrix<f64>, c01: &DMatrix<f64>, c11: &DMatrix<f64>) -> Vec<f64> {
    let a = c00.clone().try_inverse().expect("invertible C00");
    let b = c11.clone().try_inverse().expect("invertible C11");
    let product = a * c01 * b * c01.transpose();
    // `Schur::new` iterates to machine epsilon without a cap and can stall.
    let schur = Schur::try_new(product, 1e-14, 100_000).expect("Schur iteration converges");
    sorted_desc(schur.complex_eigenvalues().iter().map(|z| z.re).collect())
}

/// Largest absolute difference between the leading entries of two lists.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Gaussian radial basis features on an `nx × ny` grid of centers covering
/// `[0, period) × [y_lo, y_hi]`, with the x distance taken modulo `period`.
/// `points` is 2×m; returns (nx·ny)×m.
pub fn periodic_rbf(points: &DMatrix<f64>, nx: usize, ny: usize, sigma: f64, period: f64, y_range: (f64, f64)) -> DMatrix<f64> {
    let (y_lo, y_hi) = y_range;
    let mut centers = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let cx = (i as f64 + 0.5) * period / nx as f64;
            let cy = y_lo + (j as f64 + 0.5) * (y_hi - y_lo) / ny as f64;
            centers.push((cx, cy));
        }
    }
    DMatrix::from_fn(centers.len(), points.ncols(), |r, k| {
        let (cx, cy) = centers[r];
        let dx = (points[(0, k)] - cx).rem_euclid(period);
        let dx = dx.min(period - dx);
        let dy = points[(1, k)] - cy;
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    })
}

/// `M^{-1/2}` on the eigenvectors with eigenvalue above `rel_tol · max`;
/// returns N×r.
pub fn inverse_sqrt(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m.nrows()).filter(|&i| eig.eigenvalues[i] > rel_tol * top).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| eig.eigenvectors[(r, keep[c])] / eig.eigenvalues[keep[c]].sqrt())
}

/// Fixed-dictionary forward-backward EDMD: particles embedded by the top `n`
/// right singular functions of the whitened cross-covariance. Returns m×n.
pub fn edmd_embedding(psi_x: &DMatrix<f64>, psi_y: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (c00, c01, c11) = naive_covariances(psi_x, psi_y);
    let (t0, t1) = (inverse_sqrt(&c00, 1e-8), inverse_sqrt(&c11, 1e-8));
    let svd = (t0.transpose() * c01 * t1).svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let tu = &t0 * u;
    let coeffs = DMatrix::from_fn(t0.nrows(), n, |r, c| tu[(r, order[c])]);
    (coeffs.transpose() * psi_x).transpose()
}

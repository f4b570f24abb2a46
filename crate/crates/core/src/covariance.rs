//! Empirical second-moment estimators and truncated spectral inversion.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrixio::Mode;

/// Relative asymmetry tolerated by routines that expect symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub c00: DMatrix<f64>,
    pub c01: DMatrix<f64>,
    pub c10: DMatrix<f64>,
    pub c11: DMatrix<f64>,
    pub m_samples: usize,
}

impl CovarianceSet {
    pub fn n_features(&self) -> usize {
        self.c00.nrows()
    }
}

/// Raw (uncentered) covariances of feature matrices `psi0`, `psi1` (N×m).
pub fn estimate(psi0: &DMatrix<f64>, psi1: &DMatrix<f64>) -> Result<CovarianceSet> {
    if psi0.shape() != psi1.shape() {
        return Err(Error::Dimension(format!(
            "feature matrices are {}x{} and {}x{}",
            psi0.nrows(),
            psi0.ncols(),
            psi1.nrows(),
            psi1.ncols()
        )));
    }
    let m = psi0.ncols();
    if m < 2 {
        return Err(Error::Dimension(format!("at least 2 samples required, got {m}")));
    }
    let scale = 1.0 / m as f64;
    let mut c00 = linalg::mul_nt(psi0, psi0, scale);
    let mut c11 = linalg::mul_nt(psi1, psi1, scale);
    linalg::symmetrize(&mut c00);
    linalg::symmetrize(&mut c11);
    let c01 = linalg::mul_nt(psi0, psi1, scale);
    let c10 = c01.transpose();
    Ok(CovarianceSet {
        c00,
        c01,
        c10,
        c11,
        m_samples: m,
    })
}

/// Same estimator as [`estimate`] when many snapshots share a state.
///
/// `psi` holds the features of the distinct states (N×u); pair `i` maps state
/// `x_index[i]` to state `y_index[i]`. Cost is `O(mN + N²u)` instead of `O(mN²)`.
pub fn estimate_indexed(
    psi: &DMatrix<f64>,
    x_index: &[usize],
    y_index: &[usize],
) -> Result<CovarianceSet> {
    if x_index.len() != y_index.len() {
        return Err(Error::Dimension(format!(
            "{} source indices but {} target indices",
            x_index.len(),
            y_index.len()
        )));
    }
    let m = x_index.len();
    if m < 2 {
        return Err(Error::Dimension(format!("at least 2 samples required, got {m}")));
    }
    let u = psi.ncols();
    if let Some(bad) = x_index.iter().chain(y_index).find(|&&i| i >= u) {
        return Err(Error::Dimension(format!("state index {bad} out of range for {u} states")));
    }
    let n = psi.nrows();
    let mut cx = vec![0.0; u];
    let mut cy = vec![0.0; u];
    // transitions: column b accumulates the features of every source of b
    let mut flow = DMatrix::<f64>::zeros(n, u);
    for (&a, &b) in x_index.iter().zip(y_index) {
        cx[a] += 1.0;
        cy[b] += 1.0;
        let src = psi.column(a).clone_owned();
        let mut dst = flow.column_mut(b);
        dst += src;
    }
    let scale = 1.0 / m as f64;
    let weighted = |counts: &[f64]| {
        let mut w = psi.clone();
        for (j, c) in counts.iter().enumerate() {
            w.column_mut(j).scale_mut(c.sqrt());
        }
        let mut c = linalg::mul_nt(&w, &w, scale);
        linalg::symmetrize(&mut c);
        c
    };
    let c00 = weighted(&cx);
    let c11 = weighted(&cy);
    let c01 = linalg::mul_nt(&flow, psi, scale);
    let c10 = c01.transpose();
    Ok(CovarianceSet {
        c00,
        c01,
        c10,
        c11,
        m_samples: m,
    })
}

/// Truncated inverse square root `T` of a PSD matrix: `Tᵀ M T = I_r`.
#[derive(Debug, Clone)]
pub struct Whitening {
    /// N×r transform, columns ordered by decreasing eigenvalue.
    pub transform: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: DVector<f64>,
}

impl Whitening {
    pub fn rank(&self) -> usize {
        self.transform.ncols()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let asym = linalg::asymmetry(m);
    let norm = m.norm();
    if asym > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Contract(format!(
            "matrix is not symmetric: |M - Mᵀ| = {asym:e}, |M| = {norm:e}"
        )));
    }
    Ok(())
}

/// Eigenpairs of a symmetric matrix with eigenvalues above `rel_tol · λ_max`, descending.
fn truncated_eigen(m: &DMatrix<f64>, rel_tol: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_symmetric(m)?;
    let n = m.nrows();
    let mut sym = m.clone();
    linalg::symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    if !(lmax > 0.0) {
        return Ok((DVector::zeros(0), DMatrix::zeros(n, 0)));
    }
    let cutoff = rel_tol * lmax;
    let kept: Vec<usize> = order.into_iter().filter(|&i| eig.eigenvalues[i] > cutoff).collect();
    let values = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

pub fn whitening(m: &DMatrix<f64>, rel_tol: f64) -> Result<Whitening> {
    let (values, mut vectors) = truncated_eigen(m, rel_tol)?;
    for (mut col, lambda) in vectors.column_iter_mut().zip(values.iter()) {
        col.scale_mut(1.0 / lambda.sqrt());
    }
    Ok(Whitening {
        transform: vectors,
        eigenvalues: values,
    })
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix: eigenvalues at or
/// below `rel_tol · λ_max` are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let w = whitening(m, rel_tol)?;
    Ok(linalg::mul_nt(&w.transform, &w.transform, 1.0))
}

/// Whitening transforms and the cross-covariance in whitened coordinates,
/// `K = T0ᵀ C01 T1`. In self-adjoint mode both sides use `T0`.
#[derive(Debug, Clone)]
pub struct WhitenedCross {
    pub t0: DMatrix<f64>,
    pub t1: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

/// Whitening of `C = F Fᵀ` refined by a second pass on the whitened
/// features, so that `T'ᵀ F` has orthonormal rows to working precision even
/// when `C` is ill-conditioned. Returns `T'` and `T'ᵀ F`.
fn refined_whitening(f: &DMatrix<f64>, rel_tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut c = linalg::mul_nt(f, f, 1.0);
    linalg::symmetrize(&mut c);
    let first = whitening(&c, rel_tol)?.transform;
    let phi = linalg::mul_tn(&first, f, 1.0);
    let mut gram = linalg::mul_nt(&phi, &phi, 1.0);
    linalg::symmetrize(&mut gram);
    let second = whitening(&gram, rel_tol)?.transform;
    Ok((linalg::mul_nn(&first, &second, 1.0), linalg::mul_tn(&second, &phi, 1.0)))
}

fn scaled_columns(psi: &DMatrix<f64>, weights: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut f = psi.clone();
    for (j, mut col) in f.column_iter_mut().enumerate() {
        col.scale_mut(weights(j));
    }
    f
}

impl WhitenedCross {
    /// From precomputed covariances. Accuracy in ill-conditioned directions
    /// is limited by the rounding in the covariances themselves.
    pub fn from_covariances(cov: &CovarianceSet, mode: Mode, rel_tol: f64) -> Result<Self> {
        let t0 = whitening(&cov.c00, rel_tol)?.transform;
        let t1 = match mode {
            Mode::SelfAdjoint => t0.clone(),
            Mode::NonSelfAdjoint => whitening(&cov.c11, rel_tol)?.transform,
        };
        let k = linalg::mul_tn(&t0, &linalg::mul_nn(&cov.c01, &t1, 1.0), 1.0);
        Ok(Self { t0, t1, k })
    }

    /// From paired feature matrices (N×m), whitening the features before any
    /// cross products are formed.
    pub fn from_features(psi0: &DMatrix<f64>, psi1: &DMatrix<f64>, mode: Mode, rel_tol: f64) -> Result<Self> {
        if psi0.shape() != psi1.shape() {
            return Err(Error::Dimension(format!(
                "feature matrices are {}x{} and {}x{}",
                psi0.nrows(),
                psi0.ncols(),
                psi1.nrows(),
                psi1.ncols()
            )));
        }
        let m = psi0.ncols();
        if m < 2 {
            return Err(Error::Dimension(format!("at least 2 samples required, got {m}")));
        }
        let s = (m as f64).sqrt().recip();
        let (t0, w0) = refined_whitening(&(psi0 * s), rel_tol)?;
        let (t1, w1) = match mode {
            Mode::SelfAdjoint => (t0.clone(), linalg::mul_tn(&t0, psi1, s)),
            Mode::NonSelfAdjoint => refined_whitening(&(psi1 * s), rel_tol)?,
        };
        let k = linalg::mul_nt(&w0, &w1, 1.0);
        Ok(Self { t0, t1, k })
    }

    /// Indexed counterpart of [`WhitenedCross::from_features`]; see [`estimate_indexed`].
    pub fn from_indexed(psi: &DMatrix<f64>, x_index: &[usize], y_index: &[usize], mode: Mode, rel_tol: f64) -> Result<Self> {
        if x_index.len() != y_index.len() {
            return Err(Error::Dimension(format!(
                "{} source indices but {} target indices",
                x_index.len(),
                y_index.len()
            )));
        }
        let m = x_index.len();
        if m < 2 {
            return Err(Error::Dimension(format!("at least 2 samples required, got {m}")));
        }
        let u = psi.ncols();
        if let Some(bad) = x_index.iter().chain(y_index).find(|&&i| i >= u) {
            return Err(Error::Dimension(format!("state index {bad} out of range for {u} states")));
        }
        let (mut cx, mut cy) = (vec![0.0; u], vec![0.0; u]);
        for (&a, &b) in x_index.iter().zip(y_index) {
            cx[a] += 1.0;
            cy[b] += 1.0;
        }
        let mf = m as f64;
        let (t0, _) = refined_whitening(&scaled_columns(psi, |j| (cx[j] / mf).sqrt()), rel_tol)?;
        let t1 = match mode {
            Mode::SelfAdjoint => t0.clone(),
            Mode::NonSelfAdjoint => refined_whitening(&scaled_columns(psi, |j| (cy[j] / mf).sqrt()), rel_tol)?.0,
        };
        let phi0 = linalg::mul_tn(&t0, psi, 1.0);
        let phi1 = linalg::mul_tn(&t1, psi, 1.0);
        // column b accumulates the whitened features of every source of b
        let mut flow = DMatrix::<f64>::zeros(phi0.nrows(), u);
        for (&a, &b) in x_index.iter().zip(y_index) {
            let src = phi0.column(a).clone_owned();
            let mut dst = flow.column_mut(b);
            dst += src;
        }
        let k = linalg::mul_nt(&flow, &phi1, 1.0 / mf);
        Ok(Self { t0, t1, k })
    }

    /// Effective rank available to the spectral solve.
    pub fn rank(&self) -> usize {
        self.t0.ncols().min(self.t1.ncols())
    }
}

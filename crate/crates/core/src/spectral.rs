//! Closed-form output layer: eigenpairs of the projected Koopman operator
//! (reversible data) or singular pairs of the projected forward–backward
//! operator (non-reversible data).
//!
//! Both paths whiten with a truncated `C^{-1/2}` so the computed spectrum stays
//! real: the self-adjoint path diagonalizes `Tᵀ ((C01 + C10)/2) T`, the other
//! path takes the SVD of `T0ᵀ C01 T1`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covariance::{CovarianceSet, WhitenedCross};
use crate::error::{Error, Result};
use crate::feature_map::{FeatureMapSpec, Omega};
use crate::linalg;
use crate::matrixio::{self, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    /// Top `n` eigenvalues (or singular values), descending.
    pub values: DVector<f64>,
    /// N×n coefficients of the eigenfunctions (right singular functions).
    pub w_o: DMatrix<f64>,
    /// N×n coefficients of the left singular functions; non-self-adjoint mode only.
    pub w_o_left: Option<DMatrix<f64>>,
    pub mode: Mode,
    /// Every retained eigenvalue (or singular value), descending, for gap inspection.
    pub spectrum: DVector<f64>,
}

impl SpectralResult {
    pub fn n_outputs(&self) -> usize {
        self.values.len()
    }

    /// Writes `values.bin` (1×n), `W_o.bin` and, when present, `W_o_left.bin`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let values = DMatrix::from_row_slice(1, self.values.len(), self.values.as_slice());
        matrixio::write_matrix(&values, dir.join("values.bin"))?;
        let spectrum = DMatrix::from_row_slice(1, self.spectrum.len(), self.spectrum.as_slice());
        matrixio::write_matrix(&spectrum, dir.join("spectrum.bin"))?;
        matrixio::write_matrix(&self.w_o, dir.join("W_o.bin"))?;
        if let Some(left) = &self.w_o_left {
            matrixio::write_matrix(left, dir.join("W_o_left.bin"))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let values = matrixio::read_matrix(dir.join("values.bin"))?;
        let w_o = matrixio::read_matrix(dir.join("W_o.bin"))?;
        let left_path = dir.join("W_o_left.bin");
        let w_o_left = if left_path.exists() {
            Some(matrixio::read_matrix(left_path)?)
        } else {
            None
        };
        let spectrum_path = dir.join("spectrum.bin");
        let spectrum = if spectrum_path.exists() {
            let s = matrixio::read_matrix(spectrum_path)?;
            DVector::from_row_slice(s.as_slice())
        } else {
            DVector::from_row_slice(values.as_slice())
        };
        if w_o.ncols() != values.len() {
            return Err(Error::Dimension(format!(
                "W_o has {} columns but {} values were stored",
                w_o.ncols(),
                values.len()
            )));
        }
        let mode = if w_o_left.is_some() {
            Mode::NonSelfAdjoint
        } else {
            Mode::SelfAdjoint
        };
        Ok(Self {
            values: DVector::from_row_slice(values.as_slice()),
            w_o,
            w_o_left,
            mode,
            spectrum,
        })
    }
}

fn sorted_symmetric_eigen(s: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = s.nrows();
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Flips columns so the entry of largest magnitude is positive; `partner`
/// columns are flipped along with them.
fn fix_signs(w: &mut DMatrix<f64>, mut partner: Option<&mut DMatrix<f64>>) {
    for j in 0..w.ncols() {
        let col = w.column(j);
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            w.column_mut(j).neg_mut();
            if let Some(p) = partner.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

fn symmetric_cross(w: &WhitenedCross) -> DMatrix<f64> {
    let mut s = (&w.k + w.k.transpose()) * 0.5;
    linalg::symmetrize(&mut s);
    s
}

fn check_n(n: usize, rank: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Contract("n must be positive".into()));
    }
    if n > rank {
        return Err(Error::Rank { requested: n, rank });
    }
    Ok(())
}

/// Top-`n` eigenpairs of `S = Tᵀ ((C01 + C10)/2) T`, mapped back by `W_o = T U`.
fn self_adjoint_from(w: &WhitenedCross, n: usize) -> Result<SpectralResult> {
    check_n(n, w.t0.ncols())?;
    let (values, vectors) = sorted_symmetric_eigen(symmetric_cross(w));
    let mut w_o = linalg::mul_nn(&w.t0, &vectors.columns(0, n).into_owned(), 1.0);
    fix_signs(&mut w_o, None);
    Ok(SpectralResult {
        values: values.rows(0, n).into_owned(),
        w_o,
        w_o_left: None,
        mode: Mode::SelfAdjoint,
        spectrum: values,
    })
}

/// Top-`n` singular triplets of `K = T0ᵀ C01 T1`.
fn non_self_adjoint_from(w: &WhitenedCross, n: usize) -> Result<SpectralResult> {
    check_n(n, w.rank())?;
    let svd = w.k.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let spectrum = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    let mut u_n = DMatrix::zeros(u.nrows(), n);
    let mut v_n = DMatrix::zeros(v_t.ncols(), n);
    for (c, &i) in order.iter().take(n).enumerate() {
        u_n.set_column(c, &u.column(i));
        v_n.set_column(c, &v_t.row(i).transpose());
    }
    let mut w_o = linalg::mul_nn(&w.t0, &u_n, 1.0);
    let mut w_left = linalg::mul_nn(&w.t1, &v_n, 1.0);
    fix_signs(&mut w_o, Some(&mut w_left));
    Ok(SpectralResult {
        values: spectrum.rows(0, n).into_owned(),
        w_o,
        w_o_left: Some(w_left),
        mode: Mode::NonSelfAdjoint,
        spectrum,
    })
}

pub fn solve_self_adjoint(cov: &CovarianceSet, n: usize, rel_tol: f64) -> Result<SpectralResult> {
    self_adjoint_from(&WhitenedCross::from_covariances(cov, Mode::SelfAdjoint, rel_tol)?, n)
}

pub fn solve_non_self_adjoint(cov: &CovarianceSet, n: usize, rel_tol: f64) -> Result<SpectralResult> {
    non_self_adjoint_from(&WhitenedCross::from_covariances(cov, Mode::NonSelfAdjoint, rel_tol)?, n)
}

pub fn solve(cov: &CovarianceSet, mode: Mode, n: usize, rel_tol: f64) -> Result<SpectralResult> {
    match mode {
        Mode::SelfAdjoint => solve_self_adjoint(cov, n, rel_tol),
        Mode::NonSelfAdjoint => solve_non_self_adjoint(cov, n, rel_tol),
    }
}

/// Spectral solve on an already whitened cross-covariance; `w` must have
/// been built for the same `mode`.
pub fn solve_whitened(w: &WhitenedCross, mode: Mode, n: usize) -> Result<SpectralResult> {
    match mode {
        Mode::SelfAdjoint => self_adjoint_from(w, n),
        Mode::NonSelfAdjoint => non_self_adjoint_from(w, n),
    }
}

/// Trace of the projected operator: `tr(C00⁺ C01)` or `tr(C00⁺ C01 C11⁺ C10)`.
///
/// With `top = Some(n)` only the `n` largest eigenvalues are summed.
pub fn projected_trace(cov: &CovarianceSet, mode: Mode, rel_tol: f64, top: Option<usize>) -> Result<f64> {
    Ok(whitened_trace(&WhitenedCross::from_covariances(cov, mode, rel_tol)?, mode, top))
}

/// [`projected_trace`] on an already whitened cross-covariance.
pub fn whitened_trace(w: &WhitenedCross, mode: Mode, top: Option<usize>) -> f64 {
    match (mode, top) {
        (Mode::SelfAdjoint, None) => w.k.trace(),
        (Mode::SelfAdjoint, Some(n)) => sorted_symmetric_eigen(symmetric_cross(w)).0.iter().take(n).sum(),
        (Mode::NonSelfAdjoint, None) => w.k.norm_squared(),
        (Mode::NonSelfAdjoint, Some(n)) => {
            let mut s: Vec<f64> = w.k.singular_values().iter().map(|v| v * v).collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s.iter().take(n).sum()
        }
    }
}

/// Values of the estimated functions `W_oᵀ ψ(x, ω)` at the columns of `x` (n×m).
pub fn evaluate_functions(
    spec: &FeatureMapSpec,
    omega: &Omega,
    result: &SpectralResult,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let psi = spec.evaluate(omega, x)?;
    if psi.nrows() != result.w_o.nrows() {
        return Err(Error::Dimension(format!(
            "dictionary has {} features but W_o has {} rows",
            psi.nrows(),
            result.w_o.nrows()
        )));
    }
    Ok(linalg::mul_tn(&result.w_o, &psi, 1.0))
}

/// Values of the left singular functions `W_o'ᵀ ψ(x, ω)`.
pub fn evaluate_left_functions(
    spec: &FeatureMapSpec,
    omega: &Omega,
    result: &SpectralResult,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let left = result
        .w_o_left
        .as_ref()
        .ok_or_else(|| Error::Contract("result has no left singular functions".into()))?;
    let psi = spec.evaluate(omega, x)?;
    if psi.nrows() != left.nrows() {
        return Err(Error::Dimension(format!(
            "dictionary has {} features but W_o' has {} rows",
            psi.nrows(),
            left.nrows()
        )));
    }
    Ok(linalg::mul_tn(left, &psi, 1.0))
}

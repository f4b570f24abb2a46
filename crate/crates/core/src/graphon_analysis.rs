//! Reconstruction of graphons and transition densities from dominant
//! eigenpairs, plus image export.
//!
//! With Koopman eigenfunctions `φ_i` and Perron–Frobenius eigenfunctions
//! `φ̂_i = π φ_i`, `p(x, y) = Σ λ_i φ_i(x) φ̂_i(y)` and
//! `g(x, y) = Z Σ λ_i φ̂_i(x) φ̂_i(y)`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::covariance;
use crate::error::{Error, Result};
use crate::feature_map::{FeatureMapSpec, Omega};
use crate::hyperopt::unique_columns;
use crate::linalg;
use crate::spectral::{self, SpectralResult};

/// Largest share of absolute mass allowed below zero before clipping.
pub const MAX_NEGATIVE_MASS: f64 = 0.1;

/// Quadrature weights for sorted points in [0, 1]: each point owns the cell
/// between the midpoints to its neighbours.
pub fn cell_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { 0.0 } else { 0.5 * (grid[i - 1] + grid[i]) };
            let hi = if i + 1 == n { 1.0 } else { 0.5 * (grid[i] + grid[i + 1]) };
            hi - lo
        })
        .collect()
}

fn as_row(grid: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, grid.len(), grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDensity {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub density: DVector<f64>,
}

impl InvariantDensity {
    pub fn integral(&self) -> f64 {
        self.density.iter().zip(&self.weights).map(|(d, w)| d * w).sum()
    }
}

/// Clips negative values, fixes the sign and normalizes to unit integral.
fn normalize_density(mut values: DVector<f64>, grid: &[f64]) -> Result<InvariantDensity> {
    let weights = cell_weights(grid);
    let signed: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    if signed < 0.0 {
        values.neg_mut();
    }
    let total: f64 = values.iter().zip(&weights).map(|(v, w)| v.abs() * w).sum();
    if !(total > 0.0) {
        return Err(Error::NotADensity { negative_fraction: 1.0 });
    }
    let negative: f64 = values.iter().zip(&weights).filter(|(v, _)| **v < 0.0).map(|(v, w)| -v * w).sum();
    let negative_fraction = negative / total;
    if negative_fraction > MAX_NEGATIVE_MASS {
        return Err(Error::NotADensity { negative_fraction });
    }
    values.apply(|v| *v = v.max(0.0));
    let mass: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    values /= mass;
    Ok(InvariantDensity { grid: grid.to_vec(), weights, density: values })
}

/// Invariant density on `grid` from the leading Perron–Frobenius eigenfunction
/// `φ̂_1 = π φ_1`.
///
/// `φ̂_1` is the Lebesgue-L² projection onto the dictionary span: its
/// coefficients solve `G ξ = (1/m) Σ ψ(x_i) φ_1(x_i)` with `G = ∫ ψ ψᵀ dx`
/// by quadrature on the grid, where the `x_i` are samples of `π`.
pub fn estimate_invariant_density(
    spec: &FeatureMapSpec,
    omega: &Omega,
    result: &SpectralResult,
    samples: &DMatrix<f64>,
    grid: &[f64],
    rel_tol: f64,
) -> Result<InvariantDensity> {
    if grid.is_empty() || samples.ncols() == 0 {
        return Err(Error::Contract("grid and samples must be nonempty".into()));
    }
    let weights = cell_weights(grid);
    let psi_grid = spec.evaluate(omega, &as_row(grid))?;
    let mut scaled = psi_grid.clone();
    for (mut col, w) in scaled.column_iter_mut().zip(&weights) {
        col.scale_mut(w.sqrt());
    }
    let mut gram = linalg::mul_nt(&scaled, &scaled, 1.0);
    linalg::symmetrize(&mut gram);

    let (states, index) = unique_columns(samples);
    let psi_states = spec.evaluate(omega, &states)?;
    let phi1 = linalg::mul_tn(&result.w_o.columns(0, 1).into_owned(), &psi_states, 1.0);
    let mut counts = vec![0.0; states.ncols()];
    for &i in &index {
        counts[i] += 1.0;
    }
    let m = samples.ncols() as f64;
    let mut rhs = DVector::zeros(psi_states.nrows());
    for (u, c) in counts.iter().enumerate() {
        rhs.axpy(c * phi1[(0, u)] / m, &psi_states.column(u), 1.0);
    }
    let coeffs = covariance::pseudo_inverse(&gram, rel_tol)? * rhs;
    let values = psi_grid.transpose() * coeffs;
    normalize_density(values, grid)
}

/// Histogram estimate of the sampling density on `bins` equal cells of [0, 1].
pub fn histogram_density(samples: &[f64], bins: usize) -> InvariantDensity {
    let mut counts = DVector::zeros(bins);
    for &x in samples {
        let b = ((x * bins as f64) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    let grid = crate::systems::midpoint_grid(bins);
    counts *= bins as f64 / samples.len() as f64;
    InvariantDensity { weights: cell_weights(&grid), grid, density: counts }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphonReconstruction {
    pub rank: usize,
    pub grid: Vec<f64>,
    pub p_hat: DMatrix<f64>,
    /// Unclipped reconstruction; use [`GraphonReconstruction::g_hat_clipped`] for export.
    pub g_hat: DMatrix<f64>,
    pub pi_hat: DVector<f64>,
    pub z_hat: f64,
}

impl GraphonReconstruction {
    pub fn g_hat_clipped(&self) -> DMatrix<f64> {
        self.g_hat.map(|v| v.clamp(0.0, 1.0))
    }

    /// `∫ p̂(x, y) dy` for each grid point `x`.
    pub fn row_integrals(&self) -> DVector<f64> {
        let w = DVector::from_vec(cell_weights(&self.grid));
        &self.p_hat * w
    }
}

/// Reconstruction from explicit eigenvalues and Koopman eigenfunction values
/// (`phi` is rank×grid).
pub fn reconstruct_from_functions(
    values: &[f64],
    phi: &DMatrix<f64>,
    density: &InvariantDensity,
    z_hat: f64,
) -> Result<GraphonReconstruction> {
    let rank = values.len();
    let n = density.grid.len();
    if phi.nrows() < rank || phi.ncols() != n {
        return Err(Error::Dimension(format!(
            "need {rank}x{n} eigenfunction values, got {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let mut weighted = DMatrix::zeros(rank, n); // λ_i φ_i(x)
    let mut pf = DMatrix::zeros(rank, n); // φ̂_i(y)
    for i in 0..rank {
        for j in 0..n {
            weighted[(i, j)] = values[i] * phi[(i, j)];
            pf[(i, j)] = density.density[j] * phi[(i, j)];
        }
    }
    let p_hat = linalg::mul_tn(&weighted, &pf, 1.0);
    let mut lambda_pf = pf.clone();
    for i in 0..rank {
        lambda_pf.row_mut(i).scale_mut(values[i]);
    }
    let g_hat = linalg::mul_tn(&lambda_pf, &pf, z_hat);
    Ok(GraphonReconstruction {
        rank,
        grid: density.grid.clone(),
        p_hat,
        g_hat,
        pi_hat: density.density.clone(),
        z_hat,
    })
}

/// Rank-`rank` reconstruction from the dominant estimated eigenpairs.
pub fn reconstruct(
    result: &SpectralResult,
    spec: &FeatureMapSpec,
    omega: &Omega,
    density: &InvariantDensity,
    z_hat: f64,
    rank: usize,
) -> Result<GraphonReconstruction> {
    if rank > result.n_outputs() {
        return Err(Error::Rank { requested: rank, rank: result.n_outputs() });
    }
    let phi = spectral::evaluate_functions(spec, omega, result, &as_row(&density.grid))?;
    let phi = phi.rows(0, rank).into_owned();
    reconstruct_from_functions(&result.values.as_slice()[..rank], &phi, density, z_hat)
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_l2_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (estimate - truth).norm() / truth.norm()
}

/// Path of the min/max sidecar written next to a heatmap.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Encodes `m` as a binary (P5) 8-bit PGM, min–max normalized, row 0 on top.
/// A constant matrix renders as mid-gray.
pub fn pgm_bytes(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("heatmap input must be finite".into()));
    }
    let lo = m.min();
    let hi = m.max();
    let mut out = format!("P5\n{} {}\n255\n", m.ncols(), m.nrows()).into_bytes();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let px = if hi > lo {
                ((m[(i, j)] - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            };
            out.push(px);
        }
    }
    Ok(out)
}

/// Writes the PGM image and a `<path>.txt` sidecar with the value range.
pub fn heatmap(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = pgm_bytes(m)?;
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let text = format!("min={}\nmax={}\n", m.min(), m.max());
    std::fs::write(&side, text).map_err(|e| Error::io(side, e))
}

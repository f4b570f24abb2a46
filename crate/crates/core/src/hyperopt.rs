//! Trace loss over the scale parameters and its maximization, by log-space
//! gradient ascent with central finite differences or by grid search.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::{self, CovarianceSet, WhitenedCross};
use crate::error::{Error, Result};
use crate::feature_map::{FeatureMapSpec, Omega};
use crate::matrixio::{Activation, Mode, RunConfig, SnapshotData};
use crate::spectral;

pub const GRAD_TOL: f64 = 1e-10;
pub const MAX_HALVINGS: usize = 20;
/// Largest change of any `log ω_j` in one step.
pub const MAX_LOG_STEP: f64 = 1.0;

/// Snapshot pairs prepared for repeated feature evaluation.
///
/// When many snapshots share a state (walks on a grid, long trajectories of a
/// discrete chain) the features are evaluated once per distinct state.
#[derive(Debug, Clone)]
pub enum PreparedSamples {
    Dense { x: DMatrix<f64>, y: DMatrix<f64> },
    Indexed { states: DMatrix<f64>, x_index: Vec<usize>, y_index: Vec<usize> },
}

impl PreparedSamples {
    pub fn new(data: &SnapshotData) -> Self {
        let m = data.len();
        let d = data.dim();
        let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut index_of = |mat: &DMatrix<f64>, j: usize, src: usize, order: &mut Vec<usize>| {
            let key: Vec<u64> = mat.column(j).iter().map(|v| v.to_bits()).collect();
            let next = lookup.len();
            *lookup.entry(key).or_insert_with(|| {
                order.push(src * m + j);
                next
            })
        };
        let mut x_index = Vec::with_capacity(m);
        let mut y_index = Vec::with_capacity(m);
        for j in 0..m {
            x_index.push(index_of(&data.x, j, 0, &mut order));
            if order.len() >= m {
                break;
            }
        }
        if order.len() >= m {
            return PreparedSamples::Dense { x: data.x.clone(), y: data.y.clone() };
        }
        for j in 0..m {
            y_index.push(index_of(&data.y, j, 1, &mut order));
            if order.len() >= m {
                return PreparedSamples::Dense { x: data.x.clone(), y: data.y.clone() };
            }
        }
        let states = DMatrix::from_fn(d, order.len(), |r, c| {
            let code = order[c];
            let (src, j) = (code / m, code % m);
            if src == 0 { data.x[(r, j)] } else { data.y[(r, j)] }
        });
        PreparedSamples::Indexed { states, x_index, y_index }
    }

    pub fn is_indexed(&self) -> bool {
        matches!(self, PreparedSamples::Indexed { .. })
    }
}

/// Distinct columns of `x` in first-seen order and the index of each column.
pub fn unique_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let mut lookup: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut first = Vec::new();
    let index = (0..x.ncols())
        .map(|j| {
            let key: Vec<u64> = x.column(j).iter().map(|v| v.to_bits()).collect();
            let next = lookup.len();
            *lookup.entry(key).or_insert_with(|| {
                first.push(j);
                next
            })
        })
        .collect();
    let states = DMatrix::from_fn(x.nrows(), first.len(), |r, c| x[(r, first[c])]);
    (states, index)
}

/// `ω ↦ tr(Â(ω))` for a fixed dictionary and data set.
pub struct TraceLoss<'a> {
    spec: &'a FeatureMapSpec,
    samples: PreparedSamples,
    mode: Mode,
    rel_tol: f64,
    top: Option<usize>,
}

impl<'a> TraceLoss<'a> {
    pub fn new(spec: &'a FeatureMapSpec, data: &SnapshotData, mode: Mode, rel_tol: f64) -> Result<Self> {
        if data.dim() != spec.input_dim() {
            return Err(Error::Dimension(format!(
                "data has dimension {} but the feature map expects {}",
                data.dim(),
                spec.input_dim()
            )));
        }
        Ok(Self {
            spec,
            samples: PreparedSamples::new(data),
            mode,
            rel_tol,
            top: None,
        })
    }

    /// Restricts the loss to the `n` largest eigenvalues.
    pub fn with_top(mut self, n: Option<usize>) -> Self {
        self.top = n;
        self
    }

    pub fn spec(&self) -> &FeatureMapSpec {
        self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn covariances(&self, omega: &Omega) -> Result<CovarianceSet> {
        let finite = |psi: DMatrix<f64>| {
            if psi.iter().all(|v| v.is_finite()) {
                Ok(psi)
            } else {
                Err(Error::Loss { omega: omega.to_vec() })
            }
        };
        match &self.samples {
            PreparedSamples::Dense { x, y } => {
                let psi0 = finite(self.spec.evaluate(omega, x)?)?;
                let psi1 = finite(self.spec.evaluate(omega, y)?)?;
                covariance::estimate(&psi0, &psi1)
            }
            PreparedSamples::Indexed { states, x_index, y_index } => {
                let psi = finite(self.spec.evaluate(omega, states)?)?;
                covariance::estimate_indexed(&psi, x_index, y_index)
            }
        }
    }

    /// Whitened cross-covariance at `omega`, built directly from the features.
    pub fn whitened(&self, omega: &Omega) -> Result<WhitenedCross> {
        let finite = |psi: DMatrix<f64>| {
            if psi.iter().all(|v| v.is_finite()) {
                Ok(psi)
            } else {
                Err(Error::Loss { omega: omega.to_vec() })
            }
        };
        match &self.samples {
            PreparedSamples::Dense { x, y } => {
                let psi0 = finite(self.spec.evaluate(omega, x)?)?;
                let psi1 = finite(self.spec.evaluate(omega, y)?)?;
                WhitenedCross::from_features(&psi0, &psi1, self.mode, self.rel_tol)
            }
            PreparedSamples::Indexed { states, x_index, y_index } => {
                let psi = finite(self.spec.evaluate(omega, states)?)?;
                WhitenedCross::from_indexed(&psi, x_index, y_index, self.mode, self.rel_tol)
            }
        }
    }

    pub fn value(&self, omega: &Omega) -> Result<f64> {
        let v = spectral::whitened_trace(&self.whitened(omega)?, self.mode, self.top);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Loss { omega: omega.to_vec() })
        }
    }

    pub fn value_at(&self, flat: &[f64]) -> Result<f64> {
        self.value(&Omega::from_slice(self.spec.activation, flat)?)
    }
}

/// Trace loss of the dictionary `spec` at `omega`.
pub fn loss(spec: &FeatureMapSpec, omega: &Omega, data: &SnapshotData, mode: Mode, rel_tol: f64) -> Result<f64> {
    TraceLoss::new(spec, data, mode, rel_tol)?.value(omega)
}

/// Central-difference gradient with per-component step `fd_step · max(|ω_j|, 1e-3)`.
pub fn grad_fd<F>(f: F, omega: &[f64], fd_step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = omega.to_vec();
    let mut grad = Vec::with_capacity(omega.len());
    for j in 0..omega.len() {
        let h = fd_step * omega[j].abs().max(1e-3);
        probe[j] = omega[j] + h;
        let up = f(&probe)?;
        probe[j] = omega[j] - h;
        let down = f(&probe)?;
        probe[j] = omega[j];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub k: usize,
    pub omega: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
    pub converged: bool,
    pub final_omega: Vec<f64>,
    /// Layout of the omega vectors, used for CSV headers.
    pub activation: Activation,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.loss)
    }

    pub fn final_omega(&self) -> Omega {
        Omega::from_slice(self.activation, &self.final_omega).expect("trace omega layout")
    }

    pub fn omega_names(activation: Activation) -> Vec<String> {
        let mut names: Vec<String> = (0..activation.n_params()).map(|i| format!("omega_a{i}")).collect();
        names.push("omega_W".into());
        names.push("omega_b".into());
        names
    }

    /// `epoch,<omega columns>,loss,grad_norm` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch");
        for name in Self::omega_names(self.activation) {
            out.push(',');
            out.push_str(&name);
        }
        out.push_str(",loss,grad_norm\n");
        for e in &self.epochs {
            out.push_str(&e.k.to_string());
            for w in &e.omega {
                out.push(',');
                out.push_str(&crate::matrixio::format_float(*w));
            }
            out.push(',');
            out.push_str(&crate::matrixio::format_float(e.loss));
            out.push(',');
            out.push_str(&crate::matrixio::format_float(e.grad_norm));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub rel_loss_tol: f64,
    pub fd_step: f64,
}

impl From<&RunConfig> for AscentOptions {
    fn from(c: &RunConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            max_epochs: c.max_epochs,
            rel_loss_tol: c.rel_loss_tol,
            fd_step: c.fd_step,
        }
    }
}

/// Gradient ascent on `log ω` for any positive-parameter objective.
///
/// A step that lowers the objective is retried with half the learning rate, up
/// to [`MAX_HALVINGS`] times, so recorded losses never decrease. Steps are
/// also shortened so that no scale changes by more than a factor `e^MAX_LOG_STEP`.
pub fn ascend<F>(f: F, omega0: &[f64], activation: Activation, opts: AscentOptions) -> Result<TrainingTrace>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if opts.max_epochs == 0 {
        return Err(Error::Config("max_epochs = 0: at least one epoch required".into()));
    }
    if omega0.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Config(format!("initial omega must be positive, got {omega0:?}")));
    }
    let mut omega = omega0.to_vec();
    let mut current = match f(&omega) {
        Ok(v) if v.is_finite() => v,
        _ => return Err(Error::Initialization { omega }),
    };
    let mut epochs = Vec::new();
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    for k in 0..opts.max_epochs {
        let grad = grad_fd(&f, &omega, opts.fd_step)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        epochs.push(EpochRecord { k, omega: omega.clone(), loss: current, grad_norm });
        if grad_norm < GRAD_TOL || last_change < opts.rel_loss_tol {
            converged = true;
            break;
        }
        if k + 1 == opts.max_epochs {
            break;
        }
        let log_grad: Vec<f64> = omega.iter().zip(&grad).map(|(w, g)| w * g).collect();
        let mut eta = opts.learning_rate;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let longest = log_grad.iter().fold(0.0, |a: f64, g| a.max((eta * g).abs()));
            let shrink = if longest > MAX_LOG_STEP { MAX_LOG_STEP / longest } else { 1.0 };
            let trial: Vec<f64> = omega.iter().zip(&log_grad).map(|(w, g)| w * (shrink * eta * g).exp()).collect();
            if trial.iter().all(|w| w.is_finite() && *w > 0.0) {
                if let Ok(v) = f(&trial) {
                    if v.is_finite() && v >= current {
                        accepted = Some((trial, v));
                        break;
                    }
                }
            }
            eta *= 0.5;
        }
        match accepted {
            Some((trial, v)) => {
                last_change = (v - current).abs() / current.abs().max(f64::MIN_POSITIVE);
                omega = trial;
                current = v;
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(TrainingTrace { epochs, converged, final_omega: omega, activation })
}

pub fn optimize(spec: &FeatureMapSpec, config: &RunConfig, data: &SnapshotData) -> Result<TrainingTrace> {
    config.validate()?;
    let objective = TraceLoss::new(spec, data, config.mode, config.pinv_rel_tol)?
        .with_top(config.partial_trace.then_some(config.n_outputs));
    ascend(|w| objective.value_at(w), &config.omega_init, spec.activation, config.into())
}

/// Whitened features at `omega` followed by the spectral solve.
pub fn decompose(
    spec: &FeatureMapSpec,
    omega: &Omega,
    data: &SnapshotData,
    mode: Mode,
    n: usize,
    rel_tol: f64,
) -> Result<spectral::SpectralResult> {
    let whitened = TraceLoss::new(spec, data, mode, rel_tol)?.whitened(omega)?;
    spectral::solve_whitened(&whitened, mode, n)
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: Omega,
    pub best_loss: f64,
    /// Loss at every grid point; non-finite points hold NaN.
    pub losses: DMatrix<f64>,
}

fn search(objective: &TraceLoss, grid: &[Omega]) -> Result<(usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::Contract("grid must be nonempty".into()));
    }
    let losses: Vec<f64> = grid
        .par_iter()
        .map(|w| objective.value(w).unwrap_or(f64::NAN))
        .collect();
    let mut best: Option<usize> = None;
    for (i, v) in losses.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| *v > losses[b]) {
            best = Some(i);
        }
    }
    let best = best.ok_or_else(|| Error::Degenerate("loss is non-finite at every grid point".into()))?;
    Ok((best, losses))
}

/// Evaluates the loss at each grid point; ties go to the earliest point.
pub fn grid_search(
    spec: &FeatureMapSpec,
    config: &RunConfig,
    data: &SnapshotData,
    grid: &[Omega],
) -> Result<GridSearchResult> {
    let objective = TraceLoss::new(spec, data, config.mode, config.pinv_rel_tol)?
        .with_top(config.partial_trace.then_some(config.n_outputs));
    let (best, losses) = search(&objective, grid)?;
    Ok(GridSearchResult {
        best: grid[best].clone(),
        best_loss: losses[best],
        losses: DMatrix::from_row_slice(1, losses.len(), &losses),
    })
}

/// Grid search over the Cartesian product of weight and bias scales; the loss
/// table has one row per weight scale.
pub fn grid_search_scales(
    spec: &FeatureMapSpec,
    config: &RunConfig,
    data: &SnapshotData,
    weight_scales: &[f64],
    bias_scales: &[f64],
) -> Result<GridSearchResult> {
    let activation_params = config.omega_init[..config.activation.n_params()].to_vec();
    let grid: Vec<Omega> = weight_scales
        .iter()
        .flat_map(|&w| {
            let activation_params = activation_params.clone();
            bias_scales.iter().map(move |&b| Omega {
                activation_params: activation_params.clone(),
                weight_scale: w,
                bias_scale: b,
            })
        })
        .collect();
    let mut res = grid_search(spec, config, data, &grid)?;
    res.losses = DMatrix::from_row_slice(weight_scales.len(), bias_scales.len(), res.losses.as_slice());
    Ok(res)
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

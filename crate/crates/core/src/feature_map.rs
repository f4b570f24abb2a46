//! Randomized feature maps with tunable scales.
//!
//! Base weights and biases are drawn once from N(0, 1). A layer evaluates
//! `σ(ω_W · W̄ h + ω_b · b̄)`, so the dictionary is a smooth deterministic
//! function of the scales and can be differentiated numerically.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrixio::{self, Activation, RunConfig};
use crate::rng::NormalStream;

/// Tunable parameters of the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct Omega {
    /// Activation-specific parameters (the Gaussian bandwidth; empty for tanh/relu).
    pub activation_params: Vec<f64>,
    pub weight_scale: f64,
    pub bias_scale: f64,
}

impl Omega {
    pub fn new(weight_scale: f64, bias_scale: f64) -> Self {
        Self {
            activation_params: Vec::new(),
            weight_scale,
            bias_scale,
        }
    }

    /// Splits a flat `[activation params..., ω_W, ω_b]` vector.
    pub fn from_slice(activation: Activation, values: &[f64]) -> Result<Self> {
        let na = activation.n_params();
        if values.len() != na + 2 {
            return Err(Error::Dimension(format!(
                "omega for {activation:?} has {} entries, expected {}",
                values.len(),
                na + 2
            )));
        }
        Ok(Self {
            activation_params: values[..na].to_vec(),
            weight_scale: values[na],
            bias_scale: values[na + 1],
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.activation_params.clone();
        v.push(self.weight_scale);
        v.push(self.bias_scale);
        v
    }

    pub fn len(&self) -> usize {
        self.activation_params.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_positive(&self) -> bool {
        self.to_vec().iter().all(|w| w.is_finite() && *w > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSpec {
    pub base_weights: Vec<DMatrix<f64>>,
    pub base_biases: Vec<DVector<f64>>,
    pub activation: Activation,
    pub seed: u64,
    pub layer_sizes: Vec<usize>,
}

impl FeatureMapSpec {
    /// Draws the base parameters. The normal stream is consumed layer by layer:
    /// weights in row-major order, then biases.
    pub fn new(seed: u64, layer_sizes: &[usize], activation: Activation, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if layer_sizes.is_empty() || layer_sizes.contains(&0) {
            return Err(Error::Config("layer_sizes must be non-empty and positive".into()));
        }
        let mut normals = NormalStream::from_seed(seed);
        let mut base_weights = Vec::with_capacity(layer_sizes.len());
        let mut base_biases = Vec::with_capacity(layer_sizes.len());
        let mut fan_in = input_dim;
        for &width in layer_sizes {
            let mut w = DMatrix::zeros(width, fan_in);
            for i in 0..width {
                for j in 0..fan_in {
                    w[(i, j)] = normals.sample();
                }
            }
            let b = DVector::from_fn(width, |_, _| normals.sample());
            base_weights.push(w);
            base_biases.push(b);
            fan_in = width;
        }
        Ok(Self {
            base_weights,
            base_biases,
            activation,
            seed,
            layer_sizes: layer_sizes.to_vec(),
        })
    }

    /// Builds a map from explicit base parameters.
    pub fn from_parts(
        base_weights: Vec<DMatrix<f64>>,
        base_biases: Vec<DVector<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        if base_weights.is_empty() || base_weights.len() != base_biases.len() {
            return Err(Error::Dimension("need one bias vector per weight matrix".into()));
        }
        for (l, (w, b)) in base_weights.iter().zip(&base_biases).enumerate() {
            if w.nrows() != b.len() {
                return Err(Error::Dimension(format!("layer {l}: {} rows but {} biases", w.nrows(), b.len())));
            }
            if l > 0 && w.ncols() != base_weights[l - 1].nrows() {
                return Err(Error::Dimension(format!(
                    "layer {l}: fan-in {} does not match previous width {}",
                    w.ncols(),
                    base_weights[l - 1].nrows()
                )));
            }
        }
        let layer_sizes = base_weights.iter().map(|w| w.nrows()).collect();
        Ok(Self {
            base_weights,
            base_biases,
            activation,
            seed: 0,
            layer_sizes,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.base_weights[0].ncols()
    }

    /// Number of features `N` (width of the last layer).
    pub fn n_features(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Evaluates the dictionary on the columns of `x` (d×m), returning N×m.
    pub fn evaluate(&self, omega: &Omega, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if omega.activation_params.len() != self.activation.n_params() {
            return Err(Error::Dimension(format!(
                "{:?} expects {} activation parameters, got {}",
                self.activation,
                self.activation.n_params(),
                omega.activation_params.len()
            )));
        }
        let mut h: Option<DMatrix<f64>> = None;
        for (l, (w, b)) in self.base_weights.iter().zip(&self.base_biases).enumerate() {
            let input = h.as_ref().unwrap_or(x);
            if input.nrows() != w.ncols() {
                return Err(Error::Dimension(format!(
                    "layer {l}: input has {} rows, expected fan-in {}",
                    input.nrows(),
                    w.ncols()
                )));
            }
            let mut z = linalg::mul_nn(w, input, omega.weight_scale);
            for mut col in z.column_iter_mut() {
                col.axpy(omega.bias_scale, b, 1.0);
            }
            apply_activation(self.activation, &omega.activation_params, &mut z);
            h = Some(z);
        }
        Ok(h.expect("at least one layer"))
    }

    /// Writes base parameters as `layer_<l>_weights.bin` and `layer_<l>_biases.bin`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (l, (w, b)) in self.base_weights.iter().zip(&self.base_biases).enumerate() {
            matrixio::write_matrix(w, dir.join(format!("layer_{l}_weights.bin")))?;
            let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
            matrixio::write_matrix(&bm, dir.join(format!("layer_{l}_biases.bin")))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, n_layers: usize, activation: Activation) -> Result<Self> {
        let dir = dir.as_ref();
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            weights.push(matrixio::read_matrix(dir.join(format!("layer_{l}_weights.bin")))?);
            let b = matrixio::read_matrix(dir.join(format!("layer_{l}_biases.bin")))?;
            biases.push(DVector::from_column_slice(b.as_slice()));
        }
        Self::from_parts(weights, biases, activation)
    }
}

fn apply_activation(activation: Activation, params: &[f64], z: &mut DMatrix<f64>) {
    match activation {
        Activation::Tanh => z.apply(|v| *v = v.tanh()),
        Activation::Relu => z.apply(|v| *v = v.max(0.0)),
        Activation::Gaussian => {
            let gamma = params[0];
            z.apply(|v| *v = (-gamma * *v * *v).exp())
        }
    }
}

pub fn build_feature_map(config: &RunConfig, d: usize) -> Result<FeatureMapSpec> {
    FeatureMapSpec::new(config.seed, &config.layer_sizes, config.activation, d)
}

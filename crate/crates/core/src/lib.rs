//! Spectral decompositions of transfer operators from snapshot data, using
//! randomized feature maps whose scale parameters are tuned by maximizing the
//! trace of the projected operator.
//!
//! The pipeline is: [`feature_map`] builds the dictionary, [`covariance`]
//! estimates the Gram matrices, [`spectral`] solves for the output layer and
//! [`hyperopt`] tunes the scales. [`systems`] generates benchmark data, while
//! [`graphon_analysis`] and [`coherent`] post-process decompositions.

pub mod coherent;
pub mod covariance;
pub mod error;
pub mod feature_map;
pub mod graphon_analysis;
pub mod hyperopt;
pub(crate) mod linalg;
pub mod matrixio;
pub mod presets;
pub mod rng;
pub mod spectral;
pub mod systems;

pub use error::{Error, Result};
pub use feature_map::{build_feature_map, FeatureMapSpec, Omega};
pub use matrixio::{Activation, Mode, RunConfig, SnapshotData};
pub use spectral::SpectralResult;

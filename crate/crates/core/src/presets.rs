//! Configurations and data settings for the benchmark systems.

use crate::error::Result;
use crate::matrixio::{Activation, Mode, RunConfig, SnapshotData};
use crate::systems::{self, BickleyParams};

pub const GRAPHON_WALK_STEPS: usize = 100_000;
pub const GRAPHON_BURN_IN: usize = 100;
pub const GRAPHON_X0: f64 = 0.5;
/// Grid used for reconstruction images and error norms.
pub const RECONSTRUCTION_GRID: usize = 200;

pub const BICKLEY_PARTICLES: usize = 5000;
pub const BICKLEY_T0: f64 = 0.0;
pub const BICKLEY_T1: f64 = 40.0;
pub const BICKLEY_STEP: f64 = 0.01;

pub const OU_SAMPLES: usize = 100_000;
pub const OU_LAG: f64 = 0.5;
pub const SDE_DT: f64 = 1e-3;

/// Tanh map with `[256, 512, 256]` hidden layers starting at `ω_W = ω_b = 0.1`.
pub fn graphon_config() -> RunConfig {
    RunConfig {
        seed: 42,
        layer_sizes: vec![256, 512, 256],
        activation: Activation::Tanh,
        omega_init: vec![0.1, 0.1],
        learning_rate: 20.0,
        max_epochs: 100,
        rel_loss_tol: 1e-3,
        pinv_rel_tol: 1e-8,
        n_outputs: 5,
        mode: Mode::SelfAdjoint,
        fd_step: 1e-4,
        partial_trace: false,
    }
}

/// Singular functions of the Bickley jet starting at `ω_W = ω_b = 0.001`.
pub fn bickley_config() -> RunConfig {
    RunConfig {
        seed: 42,
        layer_sizes: vec![300],
        activation: Activation::Tanh,
        omega_init: vec![0.001, 0.001],
        learning_rate: 1e4,
        max_epochs: 100,
        rel_loss_tol: 1e-3,
        pinv_rel_tol: 1e-8,
        n_outputs: 9,
        mode: Mode::NonSelfAdjoint,
        fd_step: 0.2,
        partial_trace: true,
    }
}

pub fn ou_config() -> RunConfig {
    RunConfig {
        seed: 42,
        layer_sizes: vec![100],
        activation: Activation::Tanh,
        omega_init: vec![0.5, 0.5],
        learning_rate: 0.05,
        max_epochs: 100,
        rel_loss_tol: 1e-3,
        pinv_rel_tol: 1e-8,
        n_outputs: 4,
        mode: Mode::SelfAdjoint,
        fd_step: 1e-4,
        partial_trace: false,
    }
}

pub fn double_well_config() -> RunConfig {
    RunConfig { n_outputs: 3, ..ou_config() }
}

/// Preset configuration for a system label.
pub fn config_for(system: &str) -> Option<RunConfig> {
    match system {
        "graphon" => Some(graphon_config()),
        "bickley" => Some(bickley_config()),
        "ou" => Some(ou_config()),
        "double_well" => Some(double_well_config()),
        _ => None,
    }
}

pub fn graphon_data(steps: usize, seed: u64) -> Result<SnapshotData> {
    systems::graphon_snapshots(&systems::preset_graphon(), steps, GRAPHON_X0, seed, GRAPHON_BURN_IN)
}

pub fn bickley_data(m: usize, seed: u64) -> Result<SnapshotData> {
    systems::bickley_snapshots(&BickleyParams::default(), m, BICKLEY_T0, BICKLEY_T1, BICKLEY_STEP, seed)
}

/// OU transitions with initial states drawn from the invariant N(0, 1/β), β = 1.
pub fn ou_data(m: usize, seed: u64) -> Result<SnapshotData> {
    let spec = systems::ornstein_uhlenbeck(1.0, SDE_DT, OU_LAG);
    systems::euler_maruyama(&spec, m, |n| vec![n.sample()], seed)
}

/// Double-well transitions started uniformly on [-2, 2].
pub fn double_well_data(m: usize, seed: u64) -> Result<SnapshotData> {
    let spec = systems::double_well(1.0, SDE_DT, OU_LAG);
    systems::euler_maruyama(&spec, m, |n| vec![4.0 * crate::rng::uniform(n.rng_mut()) - 2.0], seed)
}

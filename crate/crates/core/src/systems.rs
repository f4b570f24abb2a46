//! Benchmark data generators: random walks on graphons, the Bickley jet and
//! Euler–Maruyama simulation of SDEs.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrixio::SnapshotData;
use crate::rng::{self, NormalStream};

pub type GraphonKernel = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct GraphonSpec {
    pub kernel: GraphonKernel,
    /// Number of quadrature cells on [0, 1]; walk states are the cell midpoints.
    pub grid_resolution: usize,
    pub label: String,
}

impl std::fmt::Debug for GraphonSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphonSpec")
            .field("label", &self.label)
            .field("grid_resolution", &self.grid_resolution)
            .finish_non_exhaustive()
    }
}

/// Midpoints of `n` equal cells of [0, 1].
pub fn midpoint_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect()
}

impl GraphonSpec {
    pub fn new(kernel: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, label: impl Into<String>) -> Self {
        Self {
            kernel: Arc::new(kernel),
            grid_resolution: 1000,
            label: label.into(),
        }
    }

    pub fn with_resolution(mut self, n: usize) -> Self {
        self.grid_resolution = n;
        self
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.kernel)(x, y)
    }

    pub fn grid(&self) -> Vec<f64> {
        midpoint_grid(self.grid_resolution)
    }

    /// `d(x) = ∫ g(x, y) dy` by midpoint quadrature.
    pub fn degree(&self, x: f64) -> f64 {
        let dy = 1.0 / self.grid_resolution as f64;
        self.grid().iter().map(|&y| self.eval(x, y)).sum::<f64>() * dy
    }

    /// `Z = ∫ d(x) dx` by midpoint quadrature.
    pub fn normalization(&self) -> f64 {
        let grid = self.grid();
        let cell = 1.0 / self.grid_resolution as f64;
        grid.iter()
            .map(|&x| grid.iter().map(|&y| self.eval(x, y)).sum::<f64>())
            .sum::<f64>()
            * cell
            * cell
    }

    /// `g` sampled on `points × points`.
    pub fn matrix_on(&self, points: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(points.len(), points.len(), |i, j| self.eval(points[i], points[j]))
    }

    /// Transition density `p(x, y) = g(x, y) / d(x)` on `points × points`.
    pub fn transition_density_on(&self, points: &[f64]) -> DMatrix<f64> {
        let degrees: Vec<f64> = points.iter().map(|&x| self.degree(x)).collect();
        DMatrix::from_fn(points.len(), points.len(), |i, j| self.eval(points[i], points[j]) / degrees[i])
    }
}

/// Three-bump symmetric graphon.
pub fn preset_graphon() -> GraphonSpec {
    GraphonSpec::new(
        |x, y| {
            0.2 * (-((x - 0.2).powi(2) + (y - 0.2).powi(2)) / 0.02).exp()
                + 0.1 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()
                + 0.2 * (-((x - 0.8).powi(4) + (y - 0.8).powi(4)) / 0.0005).exp()
        },
        "graphon",
    )
}

pub fn constant_graphon(value: f64) -> GraphonSpec {
    GraphonSpec::new(move |_, _| value, "constant_graphon")
}

/// Two diagonal blocks split at `split`, with weight `within_a` on the lower
/// block, `within_b` on the upper block and `between` elsewhere.
pub fn block_graphon(split: f64, within_a: f64, within_b: f64, between: f64) -> GraphonSpec {
    GraphonSpec::new(
        move |x, y| match (x <= split, y <= split) {
            (true, true) => within_a,
            (false, false) => within_b,
            _ => between,
        },
        "block_graphon",
    )
}

/// Inverse-CDF sampler for `p(x, ·) ∝ g(x, ·)` on the midpoint grid.
pub struct GraphonSampler {
    grid: Vec<f64>,
    /// Row-major cumulative (unnormalized) weights, one row per grid state.
    cdf: Vec<f64>,
}

impl GraphonSampler {
    pub fn new(spec: &GraphonSpec) -> Self {
        let grid = spec.grid();
        let n = grid.len();
        let mut cdf = vec![0.0; n * n];
        for (i, &x) in grid.iter().enumerate() {
            let row = &mut cdf[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (slot, &y) in row.iter_mut().zip(&grid) {
                acc += spec.eval(x, y).max(0.0);
                *slot = acc;
            }
        }
        Self { grid, cdf }
    }

    fn pick(row: &[f64], u: f64) -> usize {
        let target = u * row[row.len() - 1];
        row.partition_point(|&c| c < target).min(row.len() - 1)
    }

    fn draw_from_state(&self, i: usize, rng: &mut rng::Generator) -> Result<usize> {
        let n = self.grid.len();
        let row = &self.cdf[i * n..(i + 1) * n];
        if !(row[n - 1] > 0.0) {
            return Err(Error::AbsorbingState { state: self.grid[i] });
        }
        Ok(Self::pick(row, rng::uniform(rng)))
    }
}

/// Random walk of `steps` transitions from `x0`; returns `steps + 1` states.
///
/// Every state after the first is a midpoint of the sampler grid.
pub fn graphon_walk(spec: &GraphonSpec, steps: usize, x0: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(Error::Contract(format!("x0 = {x0} is outside [0, 1]")));
    }
    let sampler = GraphonSampler::new(spec);
    let mut rng = rng::generator(seed);
    let mut walk = Vec::with_capacity(steps + 1);
    walk.push(x0);
    if steps == 0 {
        return Ok(walk);
    }
    let first_row: Vec<f64> = sampler
        .grid
        .iter()
        .scan(0.0, |acc, &y| {
            *acc += spec.eval(x0, y).max(0.0);
            Some(*acc)
        })
        .collect();
    if !(first_row[first_row.len() - 1] > 0.0) {
        return Err(Error::AbsorbingState { state: x0 });
    }
    let mut state = GraphonSampler::pick(&first_row, rng::uniform(&mut rng));
    walk.push(sampler.grid[state]);
    for _ in 1..steps {
        state = sampler.draw_from_state(state, &mut rng)?;
        walk.push(sampler.grid[state]);
    }
    Ok(walk)
}

/// Lag-one snapshot pairs from a single walk after discarding `burn_in` steps.
pub fn graphon_snapshots(spec: &GraphonSpec, steps: usize, x0: f64, seed: u64, burn_in: usize) -> Result<SnapshotData> {
    let walk = graphon_walk(spec, steps + burn_in, x0, seed)?;
    let kept = &walk[burn_in..];
    let x = DMatrix::from_row_slice(1, steps, &kept[..steps]);
    let y = DMatrix::from_row_slice(1, steps, &kept[1..]);
    SnapshotData::new(x, y, 1.0, spec.label.clone())
}

/// Bickley jet parameters. Velocity field:
/// `ẋ = U0 sech²(y/L) + 2 U0 tanh(y/L) sech²(y/L) f − c_frame`,
/// `ẏ = U0 L sech²(y/L) ∂f/∂x`, with `f = Σ ε_j cos(k_j (x − c_j t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BickleyParams {
    pub u0: f64,
    pub l0: f64,
    pub r0: f64,
    pub wave_speeds: [f64; 3],
    pub amplitudes: [f64; 3],
    pub wavenumbers: [f64; 3],
    /// Speed of a co-moving frame subtracted from `ẋ` (0 for the lab frame).
    pub frame_speed: f64,
    pub period_x: f64,
    pub y_range: (f64, f64),
}

impl Default for BickleyParams {
    fn default() -> Self {
        let u0 = 5.4138;
        let r0 = 6.371;
        Self {
            u0,
            l0: 1.77,
            r0,
            wave_speeds: [0.1446 * u0, 0.205 * u0, 0.461 * u0],
            amplitudes: [0.075, 0.15, 0.3],
            wavenumbers: [2.0 / r0, 4.0 / r0, 6.0 / r0],
            frame_speed: 0.0,
            period_x: 20.0,
            y_range: (-4.0, 4.0),
        }
    }
}

impl BickleyParams {
    pub fn shear_only() -> Self {
        Self {
            amplitudes: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn velocity(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let x = x.rem_euclid(self.period_x);
        let mut f = 0.0;
        let mut df_dx = 0.0;
        for j in 0..3 {
            let phase = self.wavenumbers[j] * (x - self.wave_speeds[j] * t);
            f += self.amplitudes[j] * phase.cos();
            df_dx -= self.amplitudes[j] * self.wavenumbers[j] * phase.sin();
        }
        let th = (y / self.l0).tanh();
        let sech2 = 1.0 - th * th;
        (
            self.u0 * sech2 + 2.0 * self.u0 * th * sech2 * f - self.frame_speed,
            self.u0 * self.l0 * sech2 * df_dx,
        )
    }

    fn rk4(&self, t: f64, h: f64, (x, y): (f64, f64)) -> (f64, f64) {
        let k1 = self.velocity(t, x, y);
        let k2 = self.velocity(t + 0.5 * h, x + 0.5 * h * k1.0, y + 0.5 * h * k1.1);
        let k3 = self.velocity(t + 0.5 * h, x + 0.5 * h * k2.0, y + 0.5 * h * k2.1);
        let k4 = self.velocity(t + h, x + h * k3.0, y + h * k3.1);
        (
            (x + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0)).rem_euclid(self.period_x),
            y + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        )
    }
}

/// Uniform initial conditions in `[0, period_x] × y_range`.
pub fn bickley_initial_conditions(params: &BickleyParams, m: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::generator(seed);
    let (ylo, yhi) = params.y_range;
    let mut out = DMatrix::zeros(2, m);
    for j in 0..m {
        out[(0, j)] = params.period_x * rng::uniform(&mut g);
        out[(1, j)] = ylo + (yhi - ylo) * rng::uniform(&mut g);
    }
    out
}

/// Integrates `m` particles with fixed-step RK4 and returns their positions
/// (2×m) at `n_saves` evenly spaced times from `t0` to `t1` inclusive.
pub fn bickley_trajectories(
    params: &BickleyParams,
    m: usize,
    t0: f64,
    t1: f64,
    n_saves: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    if !(t1 > t0) {
        return Err(Error::Contract(format!("t1 = {t1} must exceed t0 = {t0}")));
    }
    if n_saves < 2 {
        return Err(Error::Contract("n_saves must be at least 2".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Contract(format!("step must be positive, got {step}")));
    }
    let init = bickley_initial_conditions(params, m, seed);
    let interval = (t1 - t0) / (n_saves - 1) as f64;
    let substeps = (interval / step - 1e-9).ceil().max(1.0) as usize;
    let h = interval / substeps as f64;

    let paths: Vec<Result<Vec<(f64, f64)>>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut state = (init[(0, j)], init[(1, j)]);
            let mut saved = Vec::with_capacity(n_saves);
            saved.push(state);
            for s in 1..n_saves {
                let start = t0 + (s - 1) as f64 * interval;
                for i in 0..substeps {
                    let t = start + i as f64 * h;
                    state = params.rk4(t, h, state);
                    if !(state.0.is_finite() && state.1.is_finite()) {
                        return Err(Error::Integration { time: t + h });
                    }
                }
                saved.push(state);
            }
            Ok(saved)
        })
        .collect();

    let mut frames = vec![DMatrix::zeros(2, m); n_saves];
    for (j, path) in paths.into_iter().enumerate() {
        for (s, (x, y)) in path?.into_iter().enumerate() {
            frames[s][(0, j)] = x;
            frames[s][(1, j)] = y;
        }
    }
    Ok(frames)
}

/// Snapshot pairs from the positions at `t0` and `t1`.
pub fn bickley_snapshots(params: &BickleyParams, m: usize, t0: f64, t1: f64, step: f64, seed: u64) -> Result<SnapshotData> {
    let mut frames = bickley_trajectories(params, m, t0, t1, 2, step, seed)?;
    let y = frames.pop().unwrap();
    let x = frames.pop().unwrap();
    SnapshotData::new(x, y, t1 - t0, "bickley")
}

pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// Writes the d×d diffusion matrix in row-major order.
pub type DiffusionFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `dX = b(X) dt + σ(X) dW`, simulated with step `dt` and sampled every `lag`.
#[derive(Clone)]
pub struct SdeSpec {
    pub dim: usize,
    pub drift: DriftFn,
    pub diffusion: DiffusionFn,
    pub dt: f64,
    pub lag: f64,
    pub label: String,
}

impl std::fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("dt", &self.dt)
            .field("lag", &self.lag)
            .finish_non_exhaustive()
    }
}

impl SdeSpec {
    pub fn steps_per_lag(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.lag > 0.0) {
            return Err(Error::Contract("dt and lag must be positive".into()));
        }
        let ratio = self.lag / self.dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio {
            return Err(Error::Contract(format!(
                "lag {} is not an integer multiple of dt {}",
                self.lag, self.dt
            )));
        }
        Ok(steps as usize)
    }

    fn step(&self, x: &mut [f64], drift: &mut [f64], sigma: &mut [f64], noise: &mut [f64], normals: &mut NormalStream) {
        let d = self.dim;
        (self.drift)(x, drift);
        (self.diffusion)(x, sigma);
        for v in noise.iter_mut() {
            *v = normals.sample();
        }
        let sq = self.dt.sqrt();
        for i in 0..d {
            let mut inc = drift[i] * self.dt;
            for j in 0..d {
                inc += sigma[i * d + j] * sq * noise[j];
            }
            x[i] += inc;
        }
    }
}

/// Ornstein–Uhlenbeck process `dX = −X dt + √(2/β) dW` in one dimension.
pub fn ornstein_uhlenbeck(beta: f64, dt: f64, lag: f64) -> SdeSpec {
    let s = (2.0 / beta).sqrt();
    SdeSpec {
        dim: 1,
        drift: Arc::new(|x, out| out[0] = -x[0]),
        diffusion: Arc::new(move |_, out| out[0] = s),
        dt,
        lag,
        label: "ou".into(),
    }
}

/// Overdamped Langevin dynamics in `V(x) = (x² − 1)²`.
pub fn double_well(beta: f64, dt: f64, lag: f64) -> SdeSpec {
    let s = (2.0 / beta).sqrt();
    SdeSpec {
        dim: 1,
        drift: Arc::new(|x, out| out[0] = -4.0 * x[0] * (x[0] * x[0] - 1.0)),
        diffusion: Arc::new(move |_, out| out[0] = s),
        dt,
        lag,
        label: "double_well".into(),
    }
}

/// Simulates `m` independent lag-`τ` transitions. Trajectory `i` draws its
/// initial condition and noise from its own stream derived from `(seed, i)`.
pub fn euler_maruyama<S>(spec: &SdeSpec, m: usize, x0_sampler: S, seed: u64) -> Result<SnapshotData>
where
    S: Fn(&mut NormalStream) -> Vec<f64> + Sync,
{
    let steps = spec.steps_per_lag()?;
    let d = spec.dim;
    let pairs: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut normals = NormalStream::new(rng::substream(seed, i as u64));
            let start = x0_sampler(&mut normals);
            if start.len() != d {
                return Err(Error::Dimension(format!("sampler returned {} coordinates, expected {d}", start.len())));
            }
            let mut x = start.clone();
            let (mut drift, mut sigma, mut noise) = (vec![0.0; d], vec![0.0; d * d], vec![0.0; d]);
            for s in 0..steps {
                spec.step(&mut x, &mut drift, &mut sigma, &mut noise, &mut normals);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp { trajectory: i, step: s + 1 });
                }
            }
            Ok((start, x))
        })
        .collect();
    let mut xs = DMatrix::zeros(d, m);
    let mut ys = DMatrix::zeros(d, m);
    for (j, pair) in pairs.into_iter().enumerate() {
        let (a, b) = pair?;
        xs.column_mut(j).copy_from_slice(&a);
        ys.column_mut(j).copy_from_slice(&b);
    }
    SnapshotData::new(xs, ys, spec.lag, spec.label.clone())
}

/// One long trajectory of `n_steps` Euler–Maruyama steps, returned as d×(n_steps + 1).
pub fn simulate_path(spec: &SdeSpec, x0: &[f64], n_steps: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = spec.dim;
    if x0.len() != d {
        return Err(Error::Dimension(format!("x0 has {} coordinates, expected {d}", x0.len())));
    }
    let mut normals = NormalStream::from_seed(seed);
    let mut out = DMatrix::zeros(d, n_steps + 1);
    let mut x = x0.to_vec();
    out.column_mut(0).copy_from_slice(&x);
    let (mut drift, mut sigma, mut noise) = (vec![0.0; d], vec![0.0; d * d], vec![0.0; d]);
    for s in 0..n_steps {
        spec.step(&mut x, &mut drift, &mut sigma, &mut noise, &mut normals);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { trajectory: 0, step: s + 1 });
        }
        out.column_mut(s + 1).copy_from_slice(&x);
    }
    Ok(out)
}

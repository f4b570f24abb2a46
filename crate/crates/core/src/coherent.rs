//! Coherent sets: k-means clustering of particles embedded by their leading
//! singular functions.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feature_map::{FeatureMapSpec, Omega};
use crate::matrixio::Mode;
use crate::rng::{self, Generator};
use crate::spectral::{self, SpectralResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { restarts: 10, max_iter: 300, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// One row per cluster.
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }
}

/// Points stored row-major for cache-friendly distance loops.
struct Points {
    data: Vec<f64>,
    m: usize,
    n: usize,
}

impl Points {
    fn new(mat: &DMatrix<f64>) -> Self {
        let (m, n) = mat.shape();
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            data.extend(mat.row(i).iter());
        }
        Points { data, m, n }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: each new center is drawn with probability proportional
/// to the squared distance to the nearest existing center.
fn plus_plus(points: &Points, k: usize, rng: &mut Generator) -> Vec<Vec<f64>> {
    let pick = |rng: &mut Generator, m: usize| ((rng::uniform(rng) * m as f64) as usize).min(m - 1);
    let mut centers = vec![points.row(pick(rng, points.m)).to_vec()];
    let mut d2: Vec<f64> = (0..points.m).map(|i| dist2(points.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng::uniform(rng) * total;
            let mut acc = 0.0;
            let mut chosen = points.m - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc >= target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            pick(rng, points.m)
        };
        let c = points.row(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(points.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

struct LloydRun {
    labels: Vec<usize>,
    centers: Vec<Vec<f64>>,
    history: Vec<f64>,
}

fn assign(points: &Points, centers: &[Vec<f64>], labels: &mut [usize]) -> Vec<f64> {
    (0..points.m)
        .map(|i| {
            let (c, d) = nearest(points.row(i), centers);
            labels[i] = c;
            d
        })
        .collect()
}

fn lloyd(points: &Points, mut centers: Vec<Vec<f64>>, opts: &KMeansOptions) -> LloydRun {
    let k = centers.len();
    let mut labels = vec![0; points.m];
    let mut history = Vec::new();
    for _ in 0..opts.max_iter.max(1) {
        let mut d = assign(points, &centers, &mut labels);
        // An empty cluster takes the point farthest from its center.
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.m)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| d[a].total_cmp(&d[b]))
                    .expect("at least k distinct points");
                counts[labels[far]] -= 1;
                counts[c] = 1;
                labels[far] = c;
                d[far] = 0.0;
            }
        }
        let mut next = vec![vec![0.0; points.n]; k];
        for i in 0..points.m {
            for (acc, v) in next[labels[i]].iter_mut().zip(points.row(i)) {
                *acc += v;
            }
        }
        for (c, center) in next.iter_mut().enumerate() {
            center.iter_mut().for_each(|v| *v /= counts[c] as f64);
        }
        let shift = centers.iter().zip(&next).map(|(a, b)| dist2(a, b)).fold(0.0, f64::max).sqrt();
        centers = next;
        history.push(inertia_rows(points, &labels, &centers));
        if shift <= opts.tol {
            break;
        }
    }
    LloydRun { labels, centers, history }
}

fn inertia_rows(points: &Points, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    (0..points.m).map(|i| dist2(points.row(i), &centers[labels[i]])).sum()
}

/// Sum of squared distances from each point (row) to its assigned center.
pub fn inertia(points: &DMatrix<f64>, labels: &[usize], centers: &DMatrix<f64>) -> f64 {
    (0..points.nrows())
        .map(|i| (points.row(i) - centers.row(labels[i])).norm_squared())
        .sum()
}

fn distinct_rows(points: &Points) -> usize {
    (0..points.m)
        .map(|i| points.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

/// k-means on the rows of `points` with k-means++ restarts; the restart with
/// the lowest inertia wins (ties go to the earlier restart).
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterAssignment> {
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("k-means input must be finite".into()));
    }
    if k == 0 || opts.restarts == 0 {
        return Err(Error::Config("k and restarts must be positive".into()));
    }
    let pts = Points::new(points);
    let distinct = distinct_rows(&pts);
    if distinct < k {
        return Err(Error::Degenerate(format!("{distinct} distinct points for k = {k}")));
    }
    let runs: Vec<LloydRun> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::substream(seed, r as u64);
            lloyd(&pts, plus_plus(&pts, k, &mut g), &opts)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.history.last() < a.history.last() { b } else { a })
        .expect("restarts > 0");
    let centers = DMatrix::from_fn(k, pts.n, |c, j| best.centers[c][j]);
    Ok(ClusterAssignment {
        inertia: *best.history.last().expect("at least one iteration"),
        labels: best.labels,
        centers,
        history: best.history,
    })
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let choose2 = |n: f64| n * (n - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sum_a * sum_b / choose2(a.len() as f64);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Particles (columns of `x`) embedded by their first `n` right singular
/// functions, one row per particle. `weighted` scales each coordinate by its
/// singular value.
pub fn embed(
    spec: &FeatureMapSpec,
    omega: &Omega,
    result: &SpectralResult,
    x: &DMatrix<f64>,
    n: usize,
    weighted: bool,
) -> Result<DMatrix<f64>> {
    if n > result.n_outputs() {
        return Err(Error::Rank { requested: n, rank: result.n_outputs() });
    }
    let f = spectral::evaluate_functions(spec, omega, result, x)?;
    let mut e = f.rows(0, n).transpose();
    if weighted {
        for (mut col, s) in e.column_iter_mut().zip(result.values.iter()) {
            col.scale_mut(*s);
        }
    }
    Ok(e)
}

/// Coherent sets at the initial time from a non-self-adjoint decomposition.
pub fn coherent_sets(
    spec: &FeatureMapSpec,
    omega: &Omega,
    result: &SpectralResult,
    x: &DMatrix<f64>,
    k: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<ClusterAssignment> {
    if result.mode != Mode::NonSelfAdjoint {
        return Err(Error::Contract("coherent sets need a non-self-adjoint decomposition".into()));
    }
    let points = embed(spec, omega, result, x, result.n_outputs(), false)?;
    kmeans(&points, k, seed, opts)
}

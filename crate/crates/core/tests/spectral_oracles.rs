mod common;

use common::*;
use nalgebra::DMatrix;
use ranndy::covariance;
use ranndy::feature_map::{FeatureMapSpec, Omega};
use ranndy::spectral;
use ranndy::{presets, systems, Activation, Mode};

/// Small random feature matrices with a lagged, correlated second block.
fn instance(seed: u64, n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let psi0 = random_matrix(n, m, seed);
    let noise = random_matrix(n, m, seed + 10_000);
    let psi1 = &psi0 * 0.7 + noise * 0.5;
    (psi0, psi1)
}

#[test]
fn self_adjoint_matches_dense_generalized_eigensolve() {
    for seed in 0..60 {
        let n = 2 + (seed as usize % 9);
        let m = n + 10 + (seed as usize * 7) % 30;
        let (psi0, psi1) = instance(seed, n, m);
        let cov = covariance::estimate(&psi0, &psi1).unwrap();
        let res = spectral::solve_self_adjoint(&cov, n, 1e-14).unwrap();
        let (c00, c01, _) = naive_covariances(&psi0, &psi1);
        let sym = (&c01 + c01.transpose()) * 0.5;
        let want = generalized_eigenvalues(&sym, &c00);
        let diff = max_abs_diff(res.values.as_slice(), &want);
        assert!(diff < 1e-8, "seed {seed}: {diff}");
    }
}

#[test]
fn non_self_adjoint_matches_forward_backward_eigenvalues() {
    for seed in 0..60 {
        let n = 2 + (seed as usize % 9);
        let m = n + 10 + (seed as usize * 5) % 30;
        let (psi0, psi1) = instance(seed, n, m);
        let cov = covariance::estimate(&psi0, &psi1).unwrap();
        let res = spectral::solve_non_self_adjoint(&cov, n, 1e-14).unwrap();
        let (c00, c01, c11) = naive_covariances(&psi0, &psi1);
        let want = forward_backward_eigenvalues(&c00, &c01, &c11);
        let squared: Vec<f64> = res.values.iter().map(|s| s * s).collect();
        let diff = max_abs_diff(&squared, &want);
        assert!(diff < 1e-7, "seed {seed}: {diff}");
        // Columns of W_o are eigenvectors of the same product.
        let product = c00.clone().try_inverse().unwrap() * &c01 * c11.clone().try_inverse().unwrap() * c01.transpose();
        for i in 0..n {
            let v = res.w_o.column(i);
            let r = &product * v - v * squared[i];
            assert!(r.norm() < 1e-6 * (1.0 + v.norm()), "seed {seed} column {i}");
        }
    }
}

fn ou_features(n: usize, m: usize, omega: (f64, f64)) -> (FeatureMapSpec, Omega, ranndy::SnapshotData) {
    let data = presets::ou_data(m, 5).unwrap();
    let spec = FeatureMapSpec::new(3, &[n], Activation::Tanh, 1).unwrap();
    let om = Omega::from_slice(Activation::Tanh, &[omega.0, omega.1]).unwrap();
    (spec, om, data)
}

#[test]
fn ou_features_match_dense_oracle() {
    let (spec, om, data) = ou_features(8, 4000, (0.5, 0.5));
    let psi0 = spec.evaluate(&om, &data.x).unwrap();
    let psi1 = spec.evaluate(&om, &data.y).unwrap();
    let cov = covariance::estimate(&psi0, &psi1).unwrap();
    let res = spectral::solve_self_adjoint(&cov, 4, 1e-14).unwrap();
    let (c00, c01, _) = naive_covariances(&psi0, &psi1);
    let want = generalized_eigenvalues(&((&c01 + c01.transpose()) * 0.5), &c00);
    assert!(max_abs_diff(res.values.as_slice(), &want) < 1e-8);
}

#[test]
fn forward_backward_values_are_contractions() {
    let (spec, om, data) = ou_features(30, 5000, (1.0, 1.0));
    let psi0 = spec.evaluate(&om, &data.x).unwrap();
    let psi1 = spec.evaluate(&om, &data.y).unwrap();
    let cov = covariance::estimate(&psi0, &psi1).unwrap();
    let res = spectral::solve_non_self_adjoint(&cov, 10, 1e-10).unwrap();
    for s in res.spectrum.iter() {
        assert!((0.0..=1.0 + 1e-6).contains(s), "{s}");
    }
}

#[test]
fn values_invariant_under_dictionary_remixing() {
    for seed in 0..10 {
        let (psi0, psi1) = instance(seed, 6, 60);
        let r = DMatrix::<f64>::identity(6, 6) + random_matrix(6, 6, seed + 99) * 0.3;
        let base = covariance::estimate(&psi0, &psi1).unwrap();
        let mixed = covariance::estimate(&(&r * &psi0), &(&r * &psi1)).unwrap();
        for mode in [Mode::SelfAdjoint, Mode::NonSelfAdjoint] {
            let a = spectral::solve(&base, mode, 6, 1e-14).unwrap();
            let b = spectral::solve(&mixed, mode, 6, 1e-14).unwrap();
            let diff = max_abs_diff(a.values.as_slice(), b.values.as_slice());
            assert!(diff < 1e-8, "seed {seed} {mode:?}: {diff}");
        }
    }
}

#[test]
fn ou_second_eigenfunction_is_linear() {
    let (spec, om, data) = ou_features(40, 20_000, (0.5, 0.5));
    let psi0 = spec.evaluate(&om, &data.x).unwrap();
    let psi1 = spec.evaluate(&om, &data.y).unwrap();
    let cov = covariance::estimate(&psi0, &psi1).unwrap();
    let res = spectral::solve_self_adjoint(&cov, 3, 1e-10).unwrap();
    let phi = spectral::evaluate_functions(&spec, &om, &res, &data.x).unwrap();
    let phi2: Vec<f64> = phi.row(1).iter().copied().collect();
    let corr = correlation(&phi2, data.x.as_slice());
    assert!(corr.abs() > 0.99, "{corr}");

    // Leading eigenfunction is the constant and the outputs are C00-orthonormal.
    let phi1: Vec<f64> = phi.row(0).iter().copied().collect();
    let mean = phi1.iter().sum::<f64>() / phi1.len() as f64;
    let sd = (phi1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / phi1.len() as f64).sqrt();
    // tanh features span the constant only approximately, worst in the tails.
    assert!(sd < 5e-2 * mean.abs(), "constant function spread {sd} around {mean}");
    let gram = &phi * phi.transpose() / data.len() as f64;
    assert!((gram - DMatrix::<f64>::identity(3, 3)).norm() < 1e-6);
}

#[test]
fn residual_and_sign_convention_on_graphon_features() {
    let data = systems::graphon_snapshots(&systems::preset_graphon(), 5000, 0.5, 2, 100).unwrap();
    let spec = FeatureMapSpec::new(4, &[12], Activation::Tanh, 1).unwrap();
    let om = Omega::from_slice(Activation::Tanh, &[2.0, 1.0]).unwrap();
    let psi0 = spec.evaluate(&om, &data.x).unwrap();
    let psi1 = spec.evaluate(&om, &data.y).unwrap();
    let cov = covariance::estimate(&psi0, &psi1).unwrap();
    let res = spectral::solve_self_adjoint(&cov, 8, 1e-12).unwrap();
    let sym = (&cov.c01 + &cov.c10) * 0.5;
    let lambda = DMatrix::from_diagonal(&res.values);
    let r = &sym * &res.w_o - &cov.c00 * &res.w_o * lambda;
    assert!(r.norm() <= 1e-7 * cov.c01.norm(), "{}", r.norm());
    for w in res.values.as_slice().windows(2) {
        assert!(w[0] >= w[1]);
    }
    for col in res.w_o.column_iter() {
        let big = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        assert!(big > 0.0);
    }
}

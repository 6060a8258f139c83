use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvcs::grad_ops::Image;
use tvcs::sensing::{
    estimate_spectral_radius, make_gaussian_operator, make_orthonormal_gaussian_operator,
    make_partial_dct_operator, make_partial_dct_operator_with_layout, synthesize_observation,
    DctLayout,
};
use tvcs::{Execution, SensingOperator};

fn dct_matrix(len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(len, len, |k, j| {
        let s = if k == 0 { (1.0 / len as f64).sqrt() } else { (2.0 / len as f64).sqrt() };
        s * (PI * (2 * j + 1) as f64 * k as f64 / (2 * len) as f64).cos()
    })
}

fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn partial_dct_matches_dense_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let op = make_partial_dct_operator(3, 8, 5).unwrap();
    let c = dct_matrix(8);
    let u = random_vec(8, &mut rng);
    let got = op.apply(&u).unwrap();
    for (row, &k) in op.dct_indices().unwrap().iter().enumerate() {
        let want: f64 = (0..8).map(|j| c[(k, j)] * u[j]).sum();
        assert!((got[row] - want).abs() < 1e-13);
    }
}

#[test]
fn separable_layout_matches_kronecker_dct() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 4;
    let op = make_partial_dct_operator_with_layout(10, n * n, 3, DctLayout::Separable2d).unwrap();
    let c = dct_matrix(n);
    let u = random_vec(n * n, &mut rng);
    let got = op.apply(&u).unwrap();
    for (row, &k) in op.dct_indices().unwrap().iter().enumerate() {
        let (kr, kc) = (k / n, k % n);
        let mut want = 0.0;
        for r in 0..n {
            for col in 0..n {
                want += c[(kr, r)] * c[(kc, col)] * u[r * n + col];
            }
        }
        assert!((got[row] - want).abs() < 1e-13);
    }
}

#[test]
fn full_dct_is_an_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for layout in [DctLayout::Flat, DctLayout::Separable2d] {
        let op = make_partial_dct_operator_with_layout(64, 64, 1, layout).unwrap();
        let u = random_vec(64, &mut rng);
        let back = op.apply_adjoint(&op.apply(&u).unwrap()).unwrap();
        assert!(max_abs_diff(&back, &u) < 1e-12);
    }
}

#[test]
fn partial_dct_rows_are_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let op = make_partial_dct_operator(300, 1024, 8).unwrap();
    let y = random_vec(300, &mut rng);
    let back = op.apply(&op.apply_adjoint(&y).unwrap()).unwrap();
    let err: f64 = back.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-12 * norm);
}

#[test]
fn gaussian_apply_matches_stored_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, n2) = (7, 20);
    let op = make_gaussian_operator(m, n2, 9).unwrap();
    let a = op.dense_matrix().unwrap();
    let u = random_vec(n2, &mut rng);
    let y = random_vec(m, &mut rng);
    let au: Vec<f64> = (0..m).map(|i| dot(&a[i * n2..(i + 1) * n2], &u)).collect();
    let aty: Vec<f64> = (0..n2).map(|j| (0..m).map(|i| a[i * n2 + j] * y[i]).sum()).collect();
    assert!(max_abs_diff(&op.apply(&u).unwrap(), &au) < 1e-13);
    assert!(max_abs_diff(&op.apply_adjoint(&y).unwrap(), &aty) < 1e-13);
}

#[test]
fn gaussian_is_deterministic() {
    let a = make_gaussian_operator(5, 9, 42).unwrap();
    let b = make_gaussian_operator(5, 9, 42).unwrap();
    let c = make_gaussian_operator(5, 9, 43).unwrap();
    assert_eq!(a.dense_matrix(), b.dense_matrix());
    assert_ne!(a.dense_matrix(), c.dense_matrix());
}

#[test]
fn gaussian_entry_statistics() {
    let (m, n2) = (100, 1000);
    let op = make_gaussian_operator(m, n2, 6).unwrap();
    let a = op.dense_matrix().unwrap();
    let count = a.len() as f64;
    let mean = a.iter().sum::<f64>() / count;
    let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    let sd = (1.0 / m as f64).sqrt();
    assert!(mean.abs() <= 4.0 * sd / count.sqrt(), "mean {mean}");
    assert!((var * m as f64 - 1.0).abs() < 0.02, "variance {var}");
}

fn dense_lambda_max(op: &SensingOperator) -> f64 {
    let a = DMatrix::from_row_slice(op.m(), op.n2(), op.dense_matrix().unwrap());
    let ata = a.transpose() * &a;
    ata.symmetric_eigenvalues().iter().fold(0.0, |acc: f64, v| acc.max(*v))
}

#[test]
fn power_iteration_matches_dense_eigenvalue() {
    for (m, n2, seed) in [(4, 4, 1), (10, 16, 2), (32, 64, 3), (20, 64, 4)] {
        let op = make_gaussian_operator(m, n2, seed).unwrap();
        let exact = dense_lambda_max(&op);
        let est = estimate_spectral_radius(&op, 1e-12, 20_000).unwrap();
        assert!((est.value - exact).abs() <= 1e-6 * exact, "{m}x{n2}: {} vs {exact}", est.value);
        assert!(est.value <= 1.01 * exact);
    }
}

#[test]
fn orthonormal_gaussian_has_unit_spectrum() {
    let op = make_orthonormal_gaussian_operator(24, 64, 5).unwrap();
    assert!((dense_lambda_max(&op) - 1.0).abs() < 1e-12);
    let est = estimate_spectral_radius(&op, 1e-10, 1000).unwrap();
    assert!((est.value - 1.0).abs() < 1e-8);
}

#[test]
fn noise_has_requested_spread() {
    let n = 512;
    let op = make_partial_dct_operator(100_000, n * n, 7).unwrap();
    let zero = Image::zeros(n);
    let obs = synthesize_observation(&op, &zero, 0.001, 3).unwrap();
    let count = obs.values.len() as f64;
    let mean = obs.values.iter().sum::<f64>() / count;
    let sd = (obs.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)).sqrt();
    assert!((sd / 0.001 - 1.0).abs() < 0.05, "sd {sd}");
}

#[test]
fn execution_paths_agree_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let op = make_gaussian_operator(300, 4096, 1).unwrap();
    let seq = op.clone().with_execution(Execution::Sequential);
    let par = op.with_execution(Execution::Parallel);
    let u = random_vec(4096, &mut rng);
    let y = random_vec(300, &mut rng);
    assert_eq!(seq.apply(&u).unwrap(), par.apply(&u).unwrap());
    assert_eq!(seq.apply_adjoint(&y).unwrap(), par.apply_adjoint(&y).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_identity(seed in any::<u64>(), m in 1usize..30, gaussian in any::<bool>()) {
        let n2 = 36;
        let op = if gaussian {
            make_gaussian_operator(m, n2, seed).unwrap()
        } else {
            make_partial_dct_operator(m, n2, seed).unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let u = random_vec(n2, &mut rng);
        let y = random_vec(m, &mut rng);
        let lhs = dot(&op.apply(&u).unwrap(), &y);
        let rhs = dot(&u, &op.apply_adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn estimate_never_far_above_truth(seed in any::<u64>(), m in 2usize..32) {
        let op = make_gaussian_operator(m, 64, seed).unwrap();
        let est = estimate_spectral_radius(&op, 1e-8, 5000).unwrap();
        prop_assert!(est.value <= 1.01 * dense_lambda_max(&op));
    }

    #[test]
    fn noiseless_observation_is_the_forward_map(seed in any::<u64>()) {
        let op = make_partial_dct_operator(20, 64, seed).unwrap();
        let u = Image::from_fn(8, |r, c| ((r * 8 + c) as f64).sin());
        let obs = synthesize_observation(&op, &u, 0.0, seed).unwrap();
        prop_assert_eq!(obs.values, op.apply(u.as_slice()).unwrap());
    }
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvcs::grad_ops::{apply_d, apply_dt, project_disc, shrink2, shrink_field, GradientField, Image};
use tvcs::{Execution, SpectralSolver};

/// Forward differences written out entry by entry.
fn dense_d(n: usize) -> DMatrix<f64> {
    let n2 = n * n;
    let mut d = DMatrix::zeros(2 * n2, n2);
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            let right = r * n + if c + 1 == n { 0 } else { c + 1 };
            let down = if r + 1 == n { c } else { (r + 1) * n + c };
            d[(i, right)] = 1.0;
            d[(i, i)] = -1.0;
            d[(n2 + i, down)] = 1.0;
            d[(n2 + i, i)] = -1.0;
        }
    }
    d
}

fn random_image(n: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn difference_operator_matches_dense_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 3, 5, 8] {
        let d = dense_d(n);
        let u = random_image(n, &mut rng);
        let want = &d * DVector::from_column_slice(u.as_slice());
        let got = apply_d(&u);
        let err = (DVector::from_column_slice(got.as_slice()) - want).norm();
        assert!(err < 1e-13, "n = {n}: {err}");

        let w = GradientField::new(n, (0..2 * n * n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let want = d.transpose() * DVector::from_column_slice(w.as_slice());
        let got = apply_dt(&w);
        let err = (DVector::from_column_slice(got.as_slice()) - want).norm();
        assert!(err < 1e-13, "n = {n}: {err}");
    }
}

#[test]
fn two_by_two_spectrum() {
    let s = SpectralSolver::new(2, 1.0).unwrap();
    let mut eig = s.eig_dtd().to_vec();
    eig.sort_by(|a, b| a.total_cmp(b));
    let want = [0.0, 4.0, 4.0, 8.0];
    for (g, w) in eig.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{eig:?}");
    }
}

#[test]
fn spectrum_matches_dense_eigenvalues() {
    for n in [3, 4, 6] {
        let d = dense_d(n);
        let dtd = d.transpose() * &d;
        let mut dense: Vec<f64> = dtd.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(|a, b| a.total_cmp(b));
        let s = SpectralSolver::new(n, 0.5).unwrap();
        let mut fft = s.eig_dtd().to_vec();
        fft.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in dense.iter().zip(&fft) {
            assert!((a - b).abs() < 1e-10, "n = {n}");
        }
    }
}

#[test]
fn spectral_solve_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (n, shift) in [(4, 0.1), (5, 3.0), (8, 25.0)] {
        let d = dense_d(n);
        let h = d.transpose() * &d + DMatrix::identity(n * n, n * n) * shift;
        let rhs = random_image(n, &mut rng);
        let want = h.lu().solve(&DVector::from_column_slice(rhs.as_slice())).unwrap();
        let got = SpectralSolver::new(n, shift).unwrap().solve(&rhs).unwrap();
        let err = (DVector::from_column_slice(got.as_slice()) - &want).norm() / want.norm();
        assert!(err < 1e-12, "n = {n}, shift = {shift}: {err}");
    }
}

#[test]
fn solver_paths_agree_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 96;
    let rhs = random_image(n, &mut rng);
    let seq = SpectralSolver::with_execution(n, 2.0, Execution::Sequential).unwrap();
    let par = SpectralSolver::with_execution(n, 2.0, Execution::Parallel).unwrap();
    assert_eq!(seq.solve(&rhs).unwrap(), par.solve(&rhs).unwrap());

    let g = apply_d(&rhs);
    assert_eq!(
        shrink_field(&g, 0.3, Execution::Sequential),
        shrink_field(&g, 0.3, Execution::Parallel)
    );
}

/// Minimizes `‖x‖ + ‖x − a‖²/(2t)` by successively refined grid search.
fn shrink_by_search(a: [f64; 2], t: f64) -> [f64; 2] {
    let cost = |x: [f64; 2]| x[0].hypot(x[1]) + ((x[0] - a[0]).powi(2) + (x[1] - a[1]).powi(2)) / (2.0 * t);
    let mut best = [0.0, 0.0];
    let mut radius = a[0].abs().max(a[1].abs()) + 1.0;
    for _ in 0..60 {
        let center = best;
        let step = radius / 10.0;
        for i in -10..=10 {
            for j in -10..=10 {
                let x = [center[0] + i as f64 * step, center[1] + j as f64 * step];
                if cost(x) < cost(best) {
                    best = x;
                }
            }
        }
        radius *= 0.5;
    }
    best
}

#[test]
fn shrink_is_the_proximal_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..40 {
        let a = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let t = rng.random_range(0.05..1.5);
        let got = shrink2(a, t);
        let want = shrink_by_search(a, t);
        assert!((got[0] - want[0]).hypot(got[1] - want[1]) < 1e-6, "{a:?} {t}");
    }
}

#[test]
fn shrink_is_firmly_non_expansive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sq = |x: [f64; 2], y: [f64; 2]| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    for t in [0.01, 0.1, 1.0] {
        for _ in 0..10_000 {
            let spread = 3.0 * t;
            let a = [rng.random_range(-spread..spread), rng.random_range(-spread..spread)];
            let b = [rng.random_range(-spread..spread), rng.random_range(-spread..spread)];
            let lhs = sq(shrink2(a, t), shrink2(b, t));
            let rhs = sq(a, b) - sq(project_disc(a, t), project_disc(b, t));
            assert!(lhs <= rhs + 1e-12);
        }
    }
}

fn small_image() -> impl Strategy<Value = Image> {
    (2usize..7).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| Image::new(n, v).unwrap())
    })
}

proptest! {
    #[test]
    fn adjoint_identity(u in small_image(), seed in any::<u64>()) {
        let n = u.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = GradientField::new(n, (0..2 * n * n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let lhs = apply_d(&u).dot(&w);
        let rhs = u.dot(&apply_dt(&w));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn constants_have_no_gradient(n in 2usize..10, c in -5.0f64..5.0) {
        prop_assert_eq!(apply_d(&Image::constant(n, c)).norm(), 0.0);
    }

    #[test]
    fn solve_inverts_apply_h(u in small_image(), shift in 0.01f64..50.0) {
        let s = SpectralSolver::new(u.n(), shift).unwrap();
        let back = s.solve(&s.apply_h(&u)).unwrap();
        prop_assert!(back.axpy(-1.0, &u).norm() <= 1e-9 * (1.0 + u.norm()));
    }

    #[test]
    fn shrink_shortens_and_keeps_direction(x in -5.0f64..5.0, y in -5.0f64..5.0, t in 0.0f64..3.0) {
        let s = shrink2([x, y], t);
        let norm = x.hypot(y);
        let sn = s[0].hypot(s[1]);
        prop_assert!((sn - (norm - t).max(0.0)).abs() <= 1e-12);
        if sn > 0.0 {
            prop_assert!((s[0] * y - s[1] * x).abs() <= 1e-12 * (1.0 + norm * norm));
        }
    }

    #[test]
    fn shrink_plus_projection_is_identity(x in -5.0f64..5.0, y in -5.0f64..5.0, t in 0.0f64..3.0) {
        let s = shrink2([x, y], t);
        let p = project_disc([x, y], t);
        prop_assert!((s[0] + p[0] - x).abs() <= 1e-12 && (s[1] + p[1] - y).abs() <= 1e-12);
    }
}

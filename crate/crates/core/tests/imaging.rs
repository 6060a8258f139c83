use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvcs::grad_ops::{GradientField, Image};
use tvcs::imaging::{
    objective_penalty, objective_tv_l2, read_image, relative_error, shepp_logan, write_image,
    SHEPP_LOGAN_ELLIPSES,
};
use tvcs::sensing::make_gaussian_operator;
use tvcs::Error;

/// Horizontal chord of each ellipse at height `y`, from the quadratic form
/// `pᵀ R diag(1/a², 1/b²) Rᵀ p ≤ 1`.
fn chord(y: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Option<(f64, f64)> {
    let (s, c) = phi_deg.to_radians().sin_cos();
    let (ia, ib) = (1.0 / (a * a), 1.0 / (b * b));
    let qxx = c * c * ia + s * s * ib;
    let qxy = c * s * (ia - ib);
    let qyy = s * s * ia + c * c * ib;
    let dy = y - y0;
    // qxx t² + 2 qxy dy t + qyy dy² − 1 ≤ 0 with t = x − x0
    let half_b = qxy * dy;
    let disc = half_b * half_b - qxx * (qyy * dy * dy - 1.0);
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    Some((x0 + (-half_b - r) / qxx, x0 + (-half_b + r) / qxx))
}

#[test]
fn phantom_center_row_matches_chord_evaluation() {
    let n = 64;
    let img = shepp_logan(n).unwrap();
    let r = n / 2;
    let y = 1.0 - (r as f64 + 0.5) * 2.0 / n as f64;
    for col in 0..n {
        let x = -1.0 + (col as f64 + 0.5) * 2.0 / n as f64;
        let mut want: f64 = 0.0;
        for e in SHEPP_LOGAN_ELLIPSES {
            if let Some((lo, hi)) = chord(y, e.a, e.b, e.x0, e.y0, e.phi_deg) {
                if x >= lo && x <= hi {
                    want += e.intensity;
                }
            }
        }
        assert!((img.get(r, col) - want.clamp(0.0, 1.0)).abs() < 1e-12, "col {col}");
    }
    // background, skull, brain tissue, ventricle
    assert_eq!(img.get(r, 0), 0.0);
    assert_eq!(img.get(r, 10), 1.0);
    assert!((img.get(r, 32) - 0.2).abs() < 1e-12);
    assert!(img.get(r, 39).abs() < 1e-12);
}

#[test]
fn phantom_rejects_tiny_sizes() {
    assert!(matches!(shepp_logan(4), Err(Error::InvalidArgument(_))));
}

#[test]
fn objective_matches_explicit_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 5;
    let u = Image::from_fn(n, |_, _| rng.random_range(0.0..1.0));
    let op = make_gaussian_operator(9, n * n, 2).unwrap();
    let f: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = op.dense_matrix().unwrap();
    let mu = 3.5;

    let mut tv = 0.0;
    for r in 0..n {
        for c in 0..n {
            let dx = u.get(r, (c + 1) % n) - u.get(r, c);
            let dy = u.get((r + 1) % n, c) - u.get(r, c);
            tv += (dx * dx + dy * dy).sqrt();
        }
    }
    let mut fit = 0.0;
    for i in 0..9 {
        let au: f64 = (0..n * n).map(|j| a[i * n * n + j] * u.as_slice()[j]).sum();
        fit += (au - f[i]).powi(2);
    }
    let report = objective_tv_l2(&u, &op, &f, mu, Some(&u)).unwrap();
    assert!((report.tv_seminorm - tv).abs() < 1e-12);
    assert!((report.objective_tv - (tv + 0.5 * mu * fit)).abs() < 1e-10);
    assert_eq!(report.rel_error_percent, Some(0.0));

    let w = GradientField::new(n, (0..2 * n * n).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
    let beta = 7.0;
    let mut pen = 0.0;
    let du = tvcs::grad_ops::apply_d(&u);
    for i in 0..n * n {
        let [w0, w1] = w.pair(i);
        let [d0, d1] = du.pair(i);
        pen += w0.hypot(w1) + 0.5 * beta * ((w0 - d0).powi(2) + (w1 - d1).powi(2));
    }
    let got = objective_penalty(&u, &w, &op, &f, mu, beta).unwrap();
    assert!((got - (pen + 0.5 * mu * fit)).abs() < 1e-10);
}

#[test]
fn relative_error_is_scale_free() {
    let truth = shepp_logan(16).unwrap();
    let u = truth.axpy(0.1, &Image::constant(16, 1.0));
    let re = relative_error(&u, &truth).unwrap();
    let re_scaled = relative_error(&u.scaled(255.0), &truth.scaled(255.0)).unwrap();
    assert!((re - re_scaled).abs() < 1e-10);
}

fn quantized(u: &Image) -> Image {
    Image::new(
        u.n(),
        u.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0).collect(),
    )
    .unwrap()
}

#[test]
fn pgm_and_png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = Image::from_fn(12, |_, _| rng.random_range(-0.2..1.2));
    for name in ["img.pgm", "img.png", "img.PNG"] {
        let path = dir.path().join(name);
        write_image(&path, &u).unwrap();
        assert_eq!(read_image(&path).unwrap(), quantized(&u), "{name}");
    }
    let bytes = std::fs::read(dir.path().join("img.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5\n12 12\n255\n"));
    assert_eq!(bytes.len(), "P5\n12 12\n255\n".len() + 144);
}

#[test]
fn pgm_with_comments_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pgm");
    let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
    bytes.extend([0u8, 255, 51, 102]);
    std::fs::write(&path, bytes).unwrap();
    let img = read_image(&path).unwrap();
    assert_eq!(img.as_slice(), &[0.0, 1.0, 0.2, 0.4]);
}

#[test]
fn unreadable_images_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = read_image(dir.path().join("none.pgm")).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));

    let cases: [(&str, Vec<u8>); 4] = [
        ("wide.pgm", [b"P5\n3 2\n255\n".as_slice(), &[0; 6]].concat()),
        ("deep.pgm", [b"P5\n2 2\n65535\n".as_slice(), &[0; 8]].concat()),
        ("short.pgm", [b"P5\n4 4\n255\n".as_slice(), &[0; 5]].concat()),
        ("text.txt", b"hello".to_vec()),
    ];
    for (name, bytes) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, bytes).unwrap();
        let err = read_image(&path).unwrap_err();
        assert!(matches!(err, Error::ImageFormat { .. }), "{name}: {err}");
    }
}

//! Test images, image files and reconstruction quality metrics.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grad_ops::{apply_d, norm2, GradientField, Image};
use crate::sensing::SensingOperator;

/// One ellipse of the phantom: intensity, semi-axes, center, rotation (degrees).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse {
        intensity,
        a,
        b,
        x0,
        y0,
        phi_deg,
    }
}

/// The ten-ellipse Shepp-Logan table with the contrast-enhanced intensities
/// (the common MATLAB `phantom` default), which already lies in `[0, 1]`.
pub const SHEPP_LOGAN_ELLIPSES: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    e(-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    e(-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    e(0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    e(0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    e(0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    e(0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    e(0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    e(0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let dx = x - self.x0;
        let dy = y - self.y0;
        let xr = dx * c + dy * s;
        let yr = -dx * s + dy * c;
        (xr / self.a).powi(2) + (yr / self.b).powi(2) <= 1.0
    }
}

/// Shepp-Logan phantom sampled at pixel centers of `[-1, 1]²`.
///
/// Column index maps to `x` (left to right), row index to `y` (top row is
/// `y ≈ 1`). Intensities of overlapping ellipses add; the sum is clipped to
/// `[0, 1]`.
pub fn shepp_logan(n: usize) -> Result<Image> {
    if n < 8 {
        return Err(Error::invalid(format!("phantom needs n >= 8, got {n}")));
    }
    let h = 2.0 / n as f64;
    Ok(Image::from_fn(n, |r, c| {
        let x = -1.0 + (c as f64 + 0.5) * h;
        let y = 1.0 - (r as f64 + 0.5) * h;
        let v: f64 = SHEPP_LOGAN_ELLIPSES
            .iter()
            .filter(|el| el.contains(x, y))
            .map(|el| el.intensity)
            .sum();
        v.clamp(0.0, 1.0)
    }))
}

/// `‖u − ū‖ / ‖ū‖ × 100`.
pub fn relative_error(u: &Image, u_true: &Image) -> Result<f64> {
    if u.n() != u_true.n() {
        return Err(Error::dims(format!(
            "relative_error: sizes {} and {} differ",
            u.n(),
            u_true.n()
        )));
    }
    let denom = u_true.norm();
    if denom == 0.0 {
        return Err(Error::invalid("relative error undefined for an all-zero reference"));
    }
    let diff: f64 = u
        .as_slice()
        .iter()
        .zip(u_true.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / denom * 100.0)
}

/// TV/L2 objective split into its terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    /// Percent; `None` when no reference image was supplied.
    pub rel_error_percent: Option<f64>,
    pub objective_tv: f64,
    pub tv_seminorm: f64,
    pub fidelity: f64,
}

fn fidelity(u: &Image, op: &SensingOperator, f: &[f64], mu: f64) -> Result<f64> {
    if f.len() != op.m() {
        return Err(Error::dims(format!(
            "observation has length {}, operator produces {}",
            f.len(),
            op.m()
        )));
    }
    let au = op.apply(u.as_slice())?;
    let r: Vec<f64> = au.iter().zip(f).map(|(a, b)| a - b).collect();
    let rn = norm2(&r);
    Ok(0.5 * mu * rn * rn)
}

/// `Σ‖D_i u‖ + (μ/2)‖Au − f‖²`.
pub fn objective_tv_l2(
    u: &Image,
    op: &SensingOperator,
    f: &[f64],
    mu: f64,
    truth: Option<&Image>,
) -> Result<QualityReport> {
    let tv_seminorm = apply_d(u).sum_of_pair_norms();
    let fidelity = fidelity(u, op, f, mu)?;
    let rel_error_percent = truth.map(|t| relative_error(u, t)).transpose()?;
    Ok(QualityReport {
        rel_error_percent,
        objective_tv: tv_seminorm + fidelity,
        tv_seminorm,
        fidelity,
    })
}

/// `Σ(‖w_i‖ + (β/2)‖w_i − D_i u‖²) + (μ/2)‖Au − f‖²`.
pub fn objective_penalty(
    u: &Image,
    w: &GradientField,
    op: &SensingOperator,
    f: &[f64],
    mu: f64,
    beta: f64,
) -> Result<f64> {
    if w.n() != u.n() {
        return Err(Error::dims("objective_penalty: field and image sizes differ"));
    }
    let du = apply_d(u);
    let gap = w.axpy(-1.0, &du).norm();
    Ok(w.sum_of_pair_norms() + 0.5 * beta * gap * gap + fidelity(u, op, f, mu)?)
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Reads an 8-bit binary PGM (P5) or grayscale PNG, mapping `0..=255` to `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format_err = |reason: String| Error::ImageFormat {
        path: path.to_path_buf(),
        reason,
    };
    let (w, h, pixels) = if bytes.starts_with(b"P5") {
        parse_pgm(&bytes).map_err(format_err)?
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| format_err(format!("cannot decode PNG: {e}")))?;
        if img.color() != image::ColorType::L8 {
            return Err(format_err(format!(
                "only 8-bit grayscale PNG is supported, file is {:?}",
                img.color()
            )));
        }
        let g = img.into_luma8();
        (g.width() as usize, g.height() as usize, g.into_raw())
    } else {
        return Err(format_err(
            "unsupported format (expected binary PGM 'P5' or PNG)".into(),
        ));
    };
    if w != h {
        return Err(format_err(format!("image is {w}x{h}; only square images are supported")));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Image::new(w, data)
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated PGM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err("malformed PGM header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed PGM header number")?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(format!("only 8-bit PGM (maxval 255) is supported, got maxval {maxval}"));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("malformed PGM header".into());
    }
    pos += 1;
    let need = w * h;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(format!(
            "truncated PGM data: {} of {need} pixel bytes present",
            body.len()
        ));
    }
    Ok((w, h, body[..need].to_vec()))
}

fn quantize(u: &Image) -> Vec<u8> {
    u.as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Writes `u` clipped to `[0, 1]` and quantized to 8 bits. The format follows
/// the extension: `.png` writes PNG, anything else binary PGM.
pub fn write_image(path: impl AsRef<Path>, u: &Image) -> Result<()> {
    let path = path.as_ref();
    let pixels = quantize(u);
    let n = u.n();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        image::save_buffer_with_format(
            path,
            &pixels,
            n as u32,
            n as u32,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::ImageFormat {
            path: path.to_path_buf(),
            reason: format!("cannot encode PNG: {e}"),
        })
    } else {
        let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
        bytes.extend_from_slice(&pixels);
        fs::write(path, bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

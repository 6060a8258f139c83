//! Periodic finite differences, 2D shrinkage and the FFT solver for the
//! `u` subproblem.
//!
//! Pixels are stored row-major. `D = (D1; D2)` where `D1` takes forward
//! differences along the column index (horizontal) and `D2` along the row
//! index (vertical), both with periodic wrap-around. With this orientation
//! `DᵀD` is the circulant 5-point Laplacian with eigenvalues
//! `4 sin²(πk/n) + 4 sin²(πl/n)`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// An `n × n` real image, row-major.
#[derive(Clone, PartialEq)]
pub struct Image {
    n: usize,
    data: Vec<f64>,
}

impl Image {
    /// Wraps `data` as an `n × n` image. Rejects wrong lengths and non-finite values.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("image side length must be positive"));
        }
        if data.len() != n * n {
            return Err(Error::dims(format!(
                "image data has {} values, expected {}",
                data.len(),
                n * n
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("image value at index {i} is not finite")));
        }
        Ok(Image { n, data })
    }

    pub(crate) fn from_vec_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Image { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Image { n, data: vec![0.0; n * n] }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Image { n, data: vec![value; n * n] }
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(f(r, c));
            }
        }
        Image { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.data, &other.data)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &Image) -> Image {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Image { n: self.n, data }
    }

    pub fn scaled(&self, alpha: f64) -> Image {
        Image {
            n: self.n,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("n", &self.n)
            .field("norm", &self.norm())
            .finish()
    }
}

/// Per-pixel gradient pairs, stored as `(horizontal block; vertical block)`,
/// i.e. the stacked vector `w ∈ R^{2n²}` matching `D = (D1; D2)`.
#[derive(Clone, PartialEq)]
pub struct GradientField {
    n: usize,
    data: Vec<f64>,
}

impl GradientField {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("field side length must be positive"));
        }
        if data.len() != 2 * n * n {
            return Err(Error::dims(format!(
                "gradient field has {} values, expected {}",
                data.len(),
                2 * n * n
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("gradient field contains non-finite values"));
        }
        Ok(GradientField { n, data })
    }

    pub(crate) fn from_vec_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), 2 * n * n);
        GradientField { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        GradientField { n, data: vec![0.0; 2 * n * n] }
    }

    pub fn from_pairs(n: usize, pairs: &[[f64; 2]]) -> Result<Self> {
        if pairs.len() != n * n {
            return Err(Error::dims(format!(
                "expected {} pairs, got {}",
                n * n,
                pairs.len()
            )));
        }
        let mut data = vec![0.0; 2 * n * n];
        for (i, p) in pairs.iter().enumerate() {
            data[i] = p[0];
            data[i + n * n] = p[1];
        }
        GradientField::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of pixels (pairs).
    pub fn pixels(&self) -> usize {
        self.n * self.n
    }

    pub fn pair(&self, i: usize) -> [f64; 2] {
        [self.data[i], self.data[i + self.pixels()]]
    }

    pub fn pair_norm(&self, i: usize) -> f64 {
        let [a, b] = self.pair(i);
        a.hypot(b)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn dot(&self, other: &GradientField) -> f64 {
        dot(&self.data, &other.data)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &GradientField) -> GradientField {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        GradientField { n: self.n, data }
    }

    /// Sum of pair norms, i.e. the isotropic TV when the field is `Du`.
    pub fn sum_of_pair_norms(&self) -> f64 {
        (0..self.pixels()).map(|i| self.pair_norm(i)).sum()
    }
}

impl fmt::Debug for GradientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientField")
            .field("n", &self.n)
            .field("norm", &self.norm())
            .finish()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Du`: forward differences with periodic wrap.
pub fn apply_d(u: &Image) -> GradientField {
    let n = u.n;
    let n2 = n * n;
    let x = &u.data;
    let mut data = vec![0.0; 2 * n2];
    let (h, v) = data.split_at_mut(n2);
    for r in 0..n {
        let down = ((r + 1) % n) * n;
        for c in 0..n {
            let i = r * n + c;
            let right = r * n + (c + 1) % n;
            h[i] = x[right] - x[i];
            v[i] = x[down + c] - x[i];
        }
    }
    GradientField { n, data }
}

/// `Dᵀw`, the exact adjoint of [`apply_d`].
pub fn apply_dt(w: &GradientField) -> Image {
    let n = w.n;
    let n2 = n * n;
    let (h, v) = w.data.split_at(n2);
    let mut out = vec![0.0; n2];
    for r in 0..n {
        let up = ((r + n - 1) % n) * n;
        for c in 0..n {
            let j = r * n + c;
            let left = r * n + (c + n - 1) % n;
            out[j] = (h[left] - h[j]) + (v[up + c] - v[j]);
        }
    }
    Image { n, data: out }
}

/// Projection onto the closed disc of the given radius.
pub fn project_disc(a: [f64; 2], radius: f64) -> [f64; 2] {
    let norm = a[0].hypot(a[1]);
    if norm <= radius {
        a
    } else {
        let s = radius / norm;
        [a[0] * s, a[1] * s]
    }
}

/// Two-dimensional shrinkage `max(‖a‖ - t, 0) a/‖a‖`, the proximal map of
/// `t‖·‖`. Points on the closed disc of radius `t` (including the origin)
/// map to zero.
pub fn shrink2(a: [f64; 2], threshold: f64) -> [f64; 2] {
    let norm = a[0].hypot(a[1]);
    if norm <= threshold {
        [0.0, 0.0]
    } else {
        let s = (norm - threshold) / norm;
        [a[0] * s, a[1] * s]
    }
}

/// Applies [`shrink2`] to every pair of `g`.
pub fn shrink_field(g: &GradientField, threshold: f64, exec: Execution) -> GradientField {
    let n2 = g.pixels();
    let mut data = vec![0.0; 2 * n2];
    let (h, v) = data.split_at_mut(n2);
    let (gh, gv) = g.data.split_at(n2);
    par::for_each_pair(exec, h, v, |i, a, b| {
        let [x, y] = shrink2([gh[i], gv[i]], threshold);
        *a = x;
        *b = y;
    });
    GradientField { n: g.n, data }
}

/// Diagonalization of `H = DᵀD + shift·I` by the 2D FFT.
#[derive(Clone)]
pub struct SpectralSolver {
    n: usize,
    eig_dtd: Vec<f64>,
    shift: f64,
    eig_h: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    exec: Execution,
}

impl fmt::Debug for SpectralSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralSolver")
            .field("n", &self.n)
            .field("shift", &self.shift)
            .finish()
    }
}

// Largest admissible imaginary residue after the inverse FFT, relative to the result.
const IMAG_RESIDUE_TOL: f64 = 1e-10;

impl SpectralSolver {
    /// Builds the solver for `n × n` images and `H = DᵀD + shift·I`.
    pub fn new(n: usize, shift: f64) -> Result<Self> {
        Self::with_execution(n, shift, Execution::default())
    }

    pub fn with_execution(n: usize, shift: f64, exec: Execution) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!(
                "spectral solver needs n >= 2, got {n}"
            )));
        }
        check_shift(shift)?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);

        // |FFT(kernel)|² for the two difference stencils
        let n2 = n * n;
        let mut k1 = vec![Complex64::new(0.0, 0.0); n2];
        let mut k2 = k1.clone();
        k1[0] = Complex64::new(-1.0, 0.0);
        k1[1] = Complex64::new(1.0, 0.0);
        k2[0] = Complex64::new(-1.0, 0.0);
        k2[n] = Complex64::new(1.0, 0.0);
        fft2(&forward, &mut k1, n, exec);
        fft2(&forward, &mut k2, n, exec);
        let mut eig_dtd: Vec<f64> = k1
            .iter()
            .zip(&k2)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        eig_dtd[0] = 0.0;
        let eig_h = eig_dtd.iter().map(|e| e + shift).collect();
        Ok(SpectralSolver {
            n,
            eig_dtd,
            shift,
            eig_h,
            forward,
            inverse,
            exec,
        })
    }

    /// Same grid and FFT plans, different shift.
    pub fn with_shift(&self, shift: f64) -> Result<Self> {
        check_shift(shift)?;
        let mut s = self.clone();
        s.shift = shift;
        s.eig_h = s.eig_dtd.iter().map(|e| e + shift).collect();
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Eigenvalues of `DᵀD`, indexed `k * n + l` for row frequency `k` and
    /// column frequency `l`.
    pub fn eig_dtd(&self) -> &[f64] {
        &self.eig_dtd
    }

    pub fn eig_h(&self) -> &[f64] {
        &self.eig_h
    }

    /// `H u = DᵀDu + shift·u`, evaluated with the stencils (no FFT).
    pub fn apply_h(&self, u: &Image) -> Image {
        apply_dt(&apply_d(u)).axpy(self.shift, u)
    }

    /// Solves `(DᵀD + shift·I) u = rhs` with one forward and one inverse 2D FFT.
    pub fn solve(&self, rhs: &Image) -> Result<Image> {
        if rhs.n != self.n {
            return Err(Error::dims(format!(
                "right-hand side is {0}x{0}, solver built for {1}x{1}",
                rhs.n, self.n
            )));
        }
        let n = self.n;
        let mut buf: Vec<Complex64> = rhs.data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft2(&self.forward, &mut buf, n, self.exec);
        for (z, e) in buf.iter_mut().zip(&self.eig_h) {
            *z /= *e;
        }
        fft2(&self.inverse, &mut buf, n, self.exec);
        let scale = 1.0 / (n * n) as f64;
        let mut re_sq = 0.0;
        let mut im_sq = 0.0;
        let data: Vec<f64> = buf
            .iter()
            .map(|z| {
                re_sq += z.re * z.re;
                im_sq += z.im * z.im;
                z.re * scale
            })
            .collect();
        if im_sq.sqrt() > IMAG_RESIDUE_TOL * re_sq.sqrt() + f64::MIN_POSITIVE {
            return Err(Error::Numerical(format!(
                "inverse FFT left imaginary residue {:.3e} against result norm {:.3e}",
                im_sq.sqrt() * scale,
                re_sq.sqrt() * scale
            )));
        }
        Ok(Image { n, data })
    }
}

fn check_shift(shift: f64) -> Result<()> {
    if shift > 0.0 && shift.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "spectral shift must be positive and finite, got {shift}"
        )))
    }
}

/// Unnormalized 2D transform of a row-major `n × n` buffer, in place.
fn fft2(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], n: usize, exec: Execution) {
    let rows_per_task = (4096 / n).max(1) * n;
    par::for_each_chunk(exec, buf, rows_per_task, |_, rows| plan.process(rows));
    transpose_in_place(buf, n);
    par::for_each_chunk(exec, buf, rows_per_task, |_, rows| plan.process(rows));
    transpose_in_place(buf, n);
}

fn transpose_in_place(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

//! Compressive sensing encoders and measurement synthesis.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::grad_ops::{norm2, Image};
use crate::par::{self, Execution};

/// Default cap on stored entries of a dense operator (8 bytes each).
pub const DEFAULT_MAX_DENSE_ENTRIES: usize = 1 << 27;

// offset mixed into the operator seed for the power-iteration start vector
const POWER_START_SEED_OFFSET: u64 = 0x5EED_0FB0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensingKind {
    /// i.i.d. `N(0, 1/m)` entries.
    DenseGaussian,
    /// Gaussian draws with rows orthonormalized, so `A Aᵀ = I`.
    OrthonormalGaussian,
    /// A caller-supplied dense matrix.
    DenseExplicit,
    /// The DC row plus `m − 1` random rows of an orthonormal DCT-II.
    PartialDct,
}

/// Which DCT the partial-DCT operator samples from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DctLayout {
    /// 1D orthonormal DCT of the vectorized image (length `n²`).
    #[default]
    Flat,
    /// Separable 2D orthonormal DCT of the `n × n` image.
    Separable2d,
}

#[derive(Clone)]
enum Payload {
    Dense(Vec<f64>),
    PartialDct {
        indices: Vec<usize>,
        layout: DctLayout,
        plan: Arc<dyn TransformType2And3<f64>>,
    },
}

/// A linear map `A: R^{n2} → R^m` with its adjoint.
///
/// Operators are immutable after construction.
#[derive(Clone)]
pub struct SensingOperator {
    m: usize,
    n2: usize,
    seed: u64,
    kind: SensingKind,
    exec: Execution,
    payload: Payload,
}

impl fmt::Debug for SensingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SensingOperator")
            .field("kind", &self.kind)
            .field("m", &self.m)
            .field("n2", &self.n2)
            .field("seed", &self.seed)
            .finish()
    }
}

fn check_sizes(m: usize, n2: usize) -> Result<()> {
    if m == 0 || n2 == 0 {
        return Err(Error::invalid(format!(
            "operator sizes must be positive (m = {m}, n2 = {n2})"
        )));
    }
    if m > n2 {
        return Err(Error::invalid(format!(
            "more measurements than unknowns (m = {m} > n2 = {n2})"
        )));
    }
    Ok(())
}

/// Dense Gaussian encoder with i.i.d. `N(0, 1/m)` entries.
pub fn make_gaussian_operator(m: usize, n2: usize, seed: u64) -> Result<SensingOperator> {
    make_gaussian_operator_with_cap(m, n2, seed, DEFAULT_MAX_DENSE_ENTRIES)
}

pub fn make_gaussian_operator_with_cap(
    m: usize,
    n2: usize,
    seed: u64,
    max_entries: usize,
) -> Result<SensingOperator> {
    check_sizes(m, n2)?;
    let entries = m
        .checked_mul(n2)
        .filter(|&e| e <= max_entries)
        .ok_or_else(|| {
            Error::invalid(format!(
                "dense {m}x{n2} Gaussian matrix needs {:.1} MiB, above the cap of {:.1} MiB; \
                 use the partial-DCT encoder for large images",
                (m as f64) * (n2 as f64) * 8.0 / (1 << 20) as f64,
                max_entries as f64 * 8.0 / (1 << 20) as f64
            ))
        })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("positive std");
    let data: Vec<f64> = (0..entries).map(|_| normal.sample(&mut rng)).collect();
    Ok(SensingOperator {
        m,
        n2,
        seed,
        kind: SensingKind::DenseGaussian,
        exec: Execution::default(),
        payload: Payload::Dense(data),
    })
}

/// Dense Gaussian encoder whose rows are orthonormalized after sampling.
///
/// Uses the same draws as [`make_gaussian_operator`]. The rows are made
/// orthonormal by a Cholesky factorization of the Gram matrix `A Aᵀ = L Lᵀ`
/// followed by `A ← L⁻¹ A`, so `λmax(AᵀA) = 1` up to rounding.
pub fn make_orthonormal_gaussian_operator(
    m: usize,
    n2: usize,
    seed: u64,
) -> Result<SensingOperator> {
    make_orthonormal_gaussian_operator_with_cap(m, n2, seed, DEFAULT_MAX_DENSE_ENTRIES)
}

pub fn make_orthonormal_gaussian_operator_with_cap(
    m: usize,
    n2: usize,
    seed: u64,
    max_entries: usize,
) -> Result<SensingOperator> {
    let mut op = make_gaussian_operator_with_cap(m, n2, seed, max_entries)?;
    let Payload::Dense(a) = &mut op.payload else {
        unreachable!("gaussian operators are dense");
    };
    orthonormalize_rows(op.exec, a, m, n2)?;
    op.kind = SensingKind::OrthonormalGaussian;
    Ok(op)
}

fn orthonormalize_rows(exec: Execution, a: &mut [f64], m: usize, n2: usize) -> Result<()> {
    let gram_rows: Vec<Vec<f64>> = par::map_range(exec, m, |i| {
        let ri = &a[i * n2..(i + 1) * n2];
        (0..=i)
            .map(|j| dot_unrolled(ri, &a[j * n2..(j + 1) * n2]))
            .collect()
    });
    let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if j <= i {
            gram_rows[i][j]
        } else {
            gram_rows[j][i]
        }
    });
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Numerical("Gaussian rows are linearly dependent; cannot orthonormalize".into())
    })?;
    let l = chol.l();
    // forward substitution, one row at a time: q_i = (a_i - Σ_{j<i} L_ij q_j) / L_ii
    for i in 0..m {
        let (done, rest) = a.split_at_mut(i * n2);
        let row = &mut rest[..n2];
        let coeffs: Vec<f64> = (0..i).map(|j| l[(i, j)]).collect();
        let inv_diag = 1.0 / l[(i, i)];
        par::for_each_chunk(exec, row, 1024, |c, block| {
            let start = c * 1024;
            for (j, &lij) in coeffs.iter().enumerate() {
                let src = &done[j * n2 + start..j * n2 + start + block.len()];
                block.iter_mut().zip(src).for_each(|(x, &q)| *x -= lij * q);
            }
            block.iter_mut().for_each(|x| *x *= inv_diag);
        });
    }
    Ok(())
}

/// Partial DCT encoder on the flattened image: the DC row plus `m − 1` rows
/// drawn uniformly without replacement from the rest.
pub fn make_partial_dct_operator(m: usize, n2: usize, seed: u64) -> Result<SensingOperator> {
    make_partial_dct_operator_with_layout(m, n2, seed, DctLayout::Flat)
}

pub fn make_partial_dct_operator_with_layout(
    m: usize,
    n2: usize,
    seed: u64,
    layout: DctLayout,
) -> Result<SensingOperator> {
    check_sizes(m, n2)?;
    let len = match layout {
        DctLayout::Flat => n2,
        DctLayout::Separable2d => {
            let n = (n2 as f64).sqrt().round() as usize;
            if n * n != n2 {
                return Err(Error::invalid(format!(
                    "2D DCT layout needs a square signal length, got {n2}"
                )));
            }
            n
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the DC row is always kept: without it constant images are invisible to
    // both A and D and the image mean is undetermined
    let mut indices: Vec<usize> = std::iter::once(0)
        .chain(index::sample(&mut rng, n2 - 1, m - 1).into_iter().map(|i| i + 1))
        .collect();
    indices.sort_unstable();
    let plan = DctPlanner::new().plan_dct2(len);
    Ok(SensingOperator {
        m,
        n2,
        seed,
        kind: SensingKind::PartialDct,
        exec: Execution::default(),
        payload: Payload::PartialDct {
            indices,
            layout,
            plan,
        },
    })
}

impl SensingOperator {
    /// Wraps a row-major `m × n2` matrix.
    pub fn from_dense(m: usize, n2: usize, matrix: Vec<f64>) -> Result<Self> {
        if m == 0 || n2 == 0 {
            return Err(Error::invalid("operator sizes must be positive"));
        }
        if matrix.len() != m * n2 {
            return Err(Error::dims(format!(
                "dense matrix has {} entries, expected {m}x{n2}",
                matrix.len()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("dense matrix contains non-finite entries"));
        }
        Ok(SensingOperator {
            m,
            n2,
            seed: 0,
            kind: SensingKind::DenseExplicit,
            exec: Execution::default(),
            payload: Payload::Dense(matrix),
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> SensingKind {
        self.kind
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    /// Row-major matrix for dense kinds.
    pub fn dense_matrix(&self) -> Option<&[f64]> {
        match &self.payload {
            Payload::Dense(a) => Some(a),
            Payload::PartialDct { .. } => None,
        }
    }

    /// Sampled DCT coefficient indices (sorted) for the partial-DCT kind.
    pub fn dct_indices(&self) -> Option<&[usize]> {
        match &self.payload {
            Payload::PartialDct { indices, .. } => Some(indices),
            Payload::Dense(_) => None,
        }
    }

    /// `A u`
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n2 {
            return Err(Error::dims(format!(
                "apply: signal has length {}, operator expects {}",
                u.len(),
                self.n2
            )));
        }
        let mut out = vec![0.0; self.m];
        match &self.payload {
            Payload::Dense(a) => {
                let n2 = self.n2;
                par::for_each_indexed(self.exec, &mut out, |i, y| {
                    let row = &a[i * n2..(i + 1) * n2];
                    *y = dot_unrolled(row, u);
                });
            }
            Payload::PartialDct {
                indices,
                layout,
                plan,
            } => {
                let mut buf = u.to_vec();
                dct_forward(plan.as_ref(), *layout, &mut buf);
                for (y, &k) in out.iter_mut().zip(indices) {
                    *y = buf[k];
                }
            }
        }
        Ok(out)
    }

    /// `Aᵀ y`
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.m {
            return Err(Error::dims(format!(
                "apply_adjoint: measurement vector has length {}, operator expects {}",
                y.len(),
                self.m
            )));
        }
        let mut out = vec![0.0; self.n2];
        match &self.payload {
            Payload::Dense(a) => {
                let n2 = self.n2;
                // column blocks, rows accumulated in order: contiguous reads, fixed summation order
                const BLOCK: usize = 512;
                par::for_each_chunk(self.exec, &mut out, BLOCK, |b, cols| {
                    let start = b * BLOCK;
                    for (i, &yi) in y.iter().enumerate() {
                        let row = &a[i * n2 + start..i * n2 + start + cols.len()];
                        for (o, r) in cols.iter_mut().zip(row) {
                            *o += yi * r;
                        }
                    }
                });
            }
            Payload::PartialDct {
                indices,
                layout,
                plan,
            } => {
                for (&yi, &k) in y.iter().zip(indices) {
                    out[k] = yi;
                }
                dct_inverse(plan.as_ref(), *layout, &mut out);
            }
        }
        Ok(out)
    }

    /// `Aᵀ(A u)`
    pub fn apply_normal(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.apply_adjoint(&self.apply(u)?)
    }
}

/// Dot product with eight independent accumulators, combined in a fixed order.
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn orthonormal_dct2(plan: &dyn TransformType2And3<f64>, x: &mut [f64]) {
    plan.process_dct2(x);
    let len = x.len() as f64;
    let s0 = (1.0 / len).sqrt();
    let s = (2.0 / len).sqrt();
    x[0] *= s0;
    x[1..].iter_mut().for_each(|v| *v *= s);
}

fn orthonormal_dct3(plan: &dyn TransformType2And3<f64>, x: &mut [f64]) {
    let len = x.len() as f64;
    x[0] *= 2.0 * (1.0 / len).sqrt();
    let s = (2.0 / len).sqrt();
    x[1..].iter_mut().for_each(|v| *v *= s);
    plan.process_dct3(x);
}

fn dct_forward(plan: &dyn TransformType2And3<f64>, layout: DctLayout, x: &mut [f64]) {
    match layout {
        DctLayout::Flat => orthonormal_dct2(plan, x),
        DctLayout::Separable2d => separable(plan, x, orthonormal_dct2),
    }
}

fn dct_inverse(plan: &dyn TransformType2And3<f64>, layout: DctLayout, x: &mut [f64]) {
    match layout {
        DctLayout::Flat => orthonormal_dct3(plan, x),
        DctLayout::Separable2d => separable(plan, x, orthonormal_dct3),
    }
}

fn separable(
    plan: &dyn TransformType2And3<f64>,
    x: &mut [f64],
    f: fn(&dyn TransformType2And3<f64>, &mut [f64]),
) {
    let n = plan.len();
    for row in x.chunks_mut(n) {
        f(plan, row);
    }
    let mut col = vec![0.0; n];
    for c in 0..n {
        for r in 0..n {
            col[r] = x[r * n + c];
        }
        f(plan, &mut col);
        for r in 0..n {
            x[r * n + c] = col[r];
        }
    }
}

/// Result of [`estimate_spectral_radius`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralEstimate {
    /// Rayleigh-quotient estimate of `λmax(AᵀA)`.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SpectralEstimate {
    /// Inflation applied to an unconverged estimate before deriving a step size.
    pub const SAFETY_FACTOR: f64 = 1.05;

    /// The value to divide step-size fractions by.
    pub fn step_bound(&self) -> f64 {
        if self.converged {
            self.value
        } else {
            self.value * Self::SAFETY_FACTOR
        }
    }
}

/// Power iteration on `AᵀA` from a seeded random start.
///
/// Partial-DCT operators have orthonormal rows, so `λmax = 1` is returned
/// without iterating.
pub fn estimate_spectral_radius(
    op: &SensingOperator,
    tol: f64,
    max_iters: usize,
) -> Result<SpectralEstimate> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("power iteration tolerance must be positive, got {tol}")));
    }
    if op.kind == SensingKind::PartialDct {
        return Ok(SpectralEstimate {
            value: 1.0,
            converged: true,
            iterations: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(op.seed ^ POWER_START_SEED_OFFSET);
    let mut x: Vec<f64> = (0..op.n2).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);

    let mut estimate = 0.0;
    for it in 1..=max_iters.max(1) {
        let ax = op.apply(&x)?;
        let rayleigh = ax.iter().map(|v| v * v).sum::<f64>();
        let mut next = op.apply_adjoint(&ax)?;
        let nn = norm2(&next);
        if nn == 0.0 {
            return Err(Error::Numerical(
                "power iteration hit the null space of AᵀA; operator may be zero".into(),
            ));
        }
        next.iter_mut().for_each(|v| *v /= nn);
        let converged = it > 1 && (rayleigh - estimate).abs() <= tol * rayleigh;
        estimate = rayleigh;
        x = next;
        if converged {
            return Ok(SpectralEstimate {
                value: estimate,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(SpectralEstimate {
        value: estimate,
        converged: false,
        iterations: max_iters.max(1),
    })
}

/// Noisy measurements `f = A ū + σ z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub sigma: f64,
}

/// Synthesizes `f = A·vec(ū) + sigma·z` with `z` i.i.d. standard normal.
pub fn synthesize_observation(
    op: &SensingOperator,
    u_true: &Image,
    sigma: f64,
    seed: u64,
) -> Result<Observation> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {sigma}")));
    }
    let mut values = op.apply(u_true.as_slice())?;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in values.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    }
    Ok(Observation { values, sigma })
}

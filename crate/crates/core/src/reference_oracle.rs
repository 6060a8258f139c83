//! Dense ground truth for small problems (`n ≤ 16`).
//!
//! Everything here works on explicit matrices: `D` assembled row by row,
//! `M = DᵀD + (μ/β)AᵀA`, `H = DᵀD + η²I`, `T = I − τAᵀA` with
//! `η = sqrt(μ/(βτ))`, and the fixed-point map `q` of the FTVCS iteration
//! written in `(w; v)` coordinates, `v = ηTu + ητAᵀf`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grad_ops::{GradientField, Image};
use crate::sensing::{make_gaussian_operator, synthesize_observation, SensingOperator};

/// Largest image side the oracle accepts.
pub const MAX_SIDE: usize = 16;

/// Pairs with `‖w_i‖` below this are treated as zero by the subgradient check.
pub const ZERO_PAIR_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DenseProblem {
    n: usize,
    mu: f64,
    beta: f64,
    tau: f64,
    eta: f64,
    a: DMatrix<f64>,
    d: DMatrix<f64>,
    f: DVector<f64>,
    ata: DMatrix<f64>,
    m_mat: DMatrix<f64>,
    h_mat: DMatrix<f64>,
    h_inv: DMatrix<f64>,
    t_mat: DMatrix<f64>,
}

/// The periodic forward-difference matrix `D = (D1; D2) ∈ R^{2n²×n²}`.
pub fn difference_matrix(n: usize) -> DMatrix<f64> {
    let n2 = n * n;
    let mut d = DMatrix::zeros(2 * n2, n2);
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            d[(i, i)] -= 1.0;
            d[(i, r * n + (c + 1) % n)] += 1.0;
            d[(n2 + i, i)] -= 1.0;
            d[(n2 + i, ((r + 1) % n) * n + c)] += 1.0;
        }
    }
    d
}

impl DenseProblem {
    /// Assembles all dense matrices. Rejects `n > 16`, non-positive
    /// parameters and instances where `N(A) ∩ N(D) ≠ {0}`.
    pub fn new(n: usize, a: DMatrix<f64>, f: DVector<f64>, mu: f64, beta: f64, tau: f64) -> Result<Self> {
        if !(2..=MAX_SIDE).contains(&n) {
            return Err(Error::invalid(format!(
                "dense oracle supports 2 <= n <= {MAX_SIDE}, got {n}"
            )));
        }
        for (name, v) in [("mu", mu), ("beta", beta), ("tau", tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let n2 = n * n;
        if a.ncols() != n2 || f.len() != a.nrows() {
            return Err(Error::dims(format!(
                "A is {}x{}, f has {} entries, image has {n2} pixels",
                a.nrows(),
                a.ncols(),
                f.len()
            )));
        }
        let d = difference_matrix(n);
        let dtd = d.transpose() * &d;
        let ata = a.transpose() * &a;

        // null-space condition via the smallest eigenvalue of AᵀA + DᵀD
        let gram = &ata + &dtd;
        let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(0.0, f64::max);
        if lo <= 1e-10 * hi.max(1.0) {
            return Err(Error::AssumptionViolated(format!(
                "smallest eigenvalue of AᵀA + DᵀD is {lo:.3e}"
            )));
        }

        let eta2 = mu / (beta * tau);
        let id = DMatrix::<f64>::identity(n2, n2);
        let m_mat = &dtd + &ata * (mu / beta);
        let h_mat = &dtd + &id * eta2;
        let t_mat = &id - &ata * tau;
        let identity_gap = (&h_mat - &m_mat - &t_mat * eta2).amax();
        if identity_gap > 1e-10 * h_mat.amax().max(1.0) {
            return Err(Error::Numerical(format!(
                "H - M - η²T has entry {identity_gap:.3e}"
            )));
        }
        let h_inv = h_mat
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("H is not positive definite".into()))?
            .inverse();
        Ok(DenseProblem {
            n,
            mu,
            beta,
            tau,
            eta: eta2.sqrt(),
            a,
            d,
            f,
            ata,
            m_mat,
            h_mat,
            h_inv,
            t_mat,
        })
    }

    /// Materializes `op` column by column.
    pub fn from_operator(op: &SensingOperator, f: &[f64], n: usize, mu: f64, beta: f64, tau: f64) -> Result<Self> {
        let n2 = n * n;
        if op.n2() != n2 {
            return Err(Error::dims("operator size does not match n"));
        }
        let mut a = DMatrix::zeros(op.m(), n2);
        let mut e = vec![0.0; n2];
        for j in 0..n2 {
            e[j] = 1.0;
            let col = op.apply(&e)?;
            a.set_column(j, &DVector::from_vec(col));
            e[j] = 0.0;
        }
        Self::new(n, a, DVector::from_column_slice(f), mu, beta, tau)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn pixels(&self) -> usize {
        self.n * self.n
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }
    pub fn m_mat(&self) -> &DMatrix<f64> {
        &self.m_mat
    }
    pub fn h_mat(&self) -> &DMatrix<f64> {
        &self.h_mat
    }
    pub fn t_mat(&self) -> &DMatrix<f64> {
        &self.t_mat
    }

    /// Same data, different `(β, τ)`.
    pub fn with_parameters(&self, beta: f64, tau: f64) -> Result<Self> {
        Self::new(self.n, self.a.clone(), self.f.clone(), self.mu, beta, tau)
    }

    pub fn lambda_max_ata(&self) -> f64 {
        SymmetricEigen::new(self.ata.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }

    /// `(D; ηI)ᵀ`, the `n² × 3n²` block `[Dᵀ  ηI]`.
    fn lift_t(&self) -> DMatrix<f64> {
        let n2 = self.pixels();
        let mut m = DMatrix::zeros(n2, 3 * n2);
        m.view_mut((0, 0), (n2, 2 * n2)).copy_from(&self.d.transpose());
        m.view_mut((0, 2 * n2), (n2, n2))
            .copy_from(&(DMatrix::<f64>::identity(n2, n2) * self.eta));
        m
    }

    /// `R = (D; ηT) H⁻¹ (D; ηI)ᵀ ∈ R^{3n²×3n²}`.
    pub fn r_mat(&self) -> DMatrix<f64> {
        let n2 = self.pixels();
        let mut left = DMatrix::zeros(3 * n2, n2);
        left.view_mut((0, 0), (2 * n2, n2)).copy_from(&self.d);
        left.view_mut((2 * n2, 0), (n2, n2))
            .copy_from(&(&self.t_mat * self.eta));
        left * &self.h_inv * self.lift_t()
    }

    pub fn rtr(&self) -> DMatrix<f64> {
        let r = self.r_mat();
        r.transpose() * r
    }

    /// Pairwise shrinkage with radius `1/β` on a stacked field.
    fn shrink_pairs(&self, x: &DVector<f64>) -> DVector<f64> {
        let n2 = self.pixels();
        let radius = 1.0 / self.beta;
        let mut out = x.clone();
        for i in 0..n2 {
            let (a0, a1) = (x[i], x[i + n2]);
            let norm = (a0 * a0 + a1 * a1).sqrt();
            // a − P_B(a)
            let (p0, p1) = if norm <= radius {
                (a0, a1)
            } else {
                (a0 * radius / norm, a1 * radius / norm)
            };
            out[i] = a0 - p0;
            out[i + n2] = a1 - p1;
        }
        out
    }

    /// Penalty objective `Σ(‖w_i‖ + (β/2)‖w_i − D_i u‖²) + (μ/2)‖Au − f‖²`.
    pub fn penalty_objective(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n2 = self.pixels();
        let tv: f64 = (0..n2).map(|i| w[i].hypot(w[i + n2])).sum();
        let gap = (w - &self.d * u).norm_squared();
        let fit = (&self.a * u - &self.f).norm_squared();
        tv + 0.5 * self.beta * gap + 0.5 * self.mu * fit
    }
}

/// Which block the exact alternation starts with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlternationStart {
    /// `w = 0`, solve for `u` first.
    UFirst,
    /// `u = Aᵀf`, shrink for `w` first.
    WFirst,
}

#[derive(Clone, Debug)]
pub struct PenaltySolution {
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PenaltySolution {
    pub fn image(&self, n: usize) -> Image {
        Image::from_vec_unchecked(n, self.u.as_slice().to_vec())
    }

    pub fn field(&self, n: usize) -> GradientField {
        GradientField::from_vec_unchecked(n, self.w.as_slice().to_vec())
    }
}

/// Exact alternating minimization of the penalty model: `w = S(Du)` and the
/// normal equations `M u = Dᵀw + (μ/β)Aᵀf` solved with a Cholesky factor of `M`.
pub fn exact_penalty_solve(dp: &DenseProblem, tol: f64, max_iters: usize) -> Result<PenaltySolution> {
    exact_penalty_solve_from(dp, AlternationStart::UFirst, tol, max_iters)
}

pub fn exact_penalty_solve_from(
    dp: &DenseProblem,
    start: AlternationStart,
    tol: f64,
    max_iters: usize,
) -> Result<PenaltySolution> {
    let chol = dp
        .m_mat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::AssumptionViolated("M is singular".into()))?;
    let atf = dp.a.transpose() * &dp.f * (dp.mu / dp.beta);
    let dt = dp.d.transpose();
    let mut u = match start {
        AlternationStart::UFirst => chol.solve(&atf),
        AlternationStart::WFirst => dp.a.transpose() * &dp.f,
    };
    let mut w = dp.shrink_pairs(&(&dp.d * &u));
    for it in 1..=max_iters {
        let u_next = chol.solve(&(&dt * &w + &atf));
        let change = (&u_next - &u).norm() / u.norm().max(1e-12);
        u = u_next;
        w = dp.shrink_pairs(&(&dp.d * &u));
        if change <= tol {
            return Ok(PenaltySolution {
                u,
                w,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(PenaltySolution {
        u,
        w,
        iterations: max_iters,
        converged: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointReport {
    /// `‖w − S(Du)‖`
    pub shrink_residual: f64,
    /// `‖M u − Dᵀw − (μ/β)Aᵀf‖`
    pub normal_eq_residual: f64,
    /// TV/L2 KKT residual of `(u, w)` with the multiplier `β(Du − w)`.
    pub kkt_residual: f64,
    /// Pixels with `‖D_i u‖ ≤ 1/β`.
    pub support_l: Vec<usize>,
    /// `min{1/β − ‖D_i u‖ : i ∈ L}`; `None` when `L` is empty.
    pub omega: Option<f64>,
}

impl FixedPointReport {
    /// Pixels outside `L`.
    pub fn support_e(&self, pixels: usize) -> Vec<usize> {
        let mut in_l = vec![false; pixels];
        self.support_l.iter().for_each(|&i| in_l[i] = true);
        (0..pixels).filter(|&i| !in_l[i]).collect()
    }
}

/// Residuals of the penalty fixed-point system at `(u, w)`.
pub fn check_fixed_point(dp: &DenseProblem, u: &DVector<f64>, w: &DVector<f64>) -> FixedPointReport {
    let n2 = dp.pixels();
    let du = &dp.d * u;
    let shrink_residual = (w - dp.shrink_pairs(&du)).norm();
    let rhs = dp.d.transpose() * w + dp.a.transpose() * &dp.f * (dp.mu / dp.beta);
    let normal_eq_residual = (&dp.m_mat * u - rhs).norm();
    let lambda = (&du - w) * dp.beta;
    let kkt_residual = check_kkt_constrained(dp, u, w, &lambda);
    let radius = 1.0 / dp.beta;
    let mut support_l = Vec::new();
    let mut omega: Option<f64> = None;
    for i in 0..n2 {
        let g = du[i].hypot(du[i + n2]);
        if g <= radius {
            support_l.push(i);
            let gap = radius - g;
            omega = Some(omega.map_or(gap, |o| o.min(gap)));
        }
    }
    FixedPointReport {
        shrink_residual,
        normal_eq_residual,
        kkt_residual,
        support_l,
        omega,
    }
}

/// KKT residual of the constrained TV/L2 problem with Lagrangian
/// `Σ‖w_i‖ − λᵀ(w − Du) + (μ/2)‖Au − f‖²`: the largest of
/// primal feasibility `‖w − Du‖`, stationarity `‖Dᵀλ + μAᵀ(Au − f)‖`, and
/// the subgradient violation of `λ_i ∈ ∂‖w_i‖` (Euclidean norm over pixels).
pub fn check_kkt_constrained(
    dp: &DenseProblem,
    u: &DVector<f64>,
    w: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let n2 = dp.pixels();
    let primal = (w - &dp.d * u).norm();
    let stationarity =
        (dp.d.transpose() * lambda + dp.a.transpose() * (&dp.a * u - &dp.f) * dp.mu).norm();
    let mut sub_sq = 0.0;
    for i in 0..n2 {
        let (w0, w1) = (w[i], w[i + n2]);
        let (l0, l1) = (lambda[i], lambda[i + n2]);
        let wn = w0.hypot(w1);
        let v = if wn < ZERO_PAIR_TOL {
            (l0.hypot(l1) - 1.0).max(0.0)
        } else {
            (l0 - w0 / wn).hypot(l1 - w1 / wn)
        };
        sub_sq += v * v;
    }
    primal.max(stationarity).max(sub_sq.sqrt())
}

/// Dense realization of `h`, `p` and `q` for one problem.
#[derive(Clone, Debug)]
pub struct QOperator {
    n2: usize,
    beta: f64,
    eta: f64,
    h_map: DMatrix<f64>,
    p_map: DMatrix<f64>,
    offset: DVector<f64>,
    u_map: DMatrix<f64>,
    t_mat: DMatrix<f64>,
    tau_atf: DVector<f64>,
}

pub fn build_q_operator(dp: &DenseProblem) -> QOperator {
    let lift_t = dp.lift_t();
    let u_map = &dp.h_inv * lift_t;
    let h_map = &dp.d * &u_map;
    let p_map = &dp.t_mat * &u_map * dp.eta;
    let tau_atf = dp.a.transpose() * &dp.f * dp.tau;
    QOperator {
        n2: dp.pixels(),
        beta: dp.beta,
        eta: dp.eta,
        h_map,
        p_map,
        offset: &tau_atf * dp.eta,
        u_map,
        t_mat: dp.t_mat.clone(),
        tau_atf,
    }
}

impl QOperator {
    /// `h(w; v) = D H⁻¹ (Dᵀw + ηv)`
    pub fn h(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h_map * x
    }

    /// `p(w; v) = ηT H⁻¹ (Dᵀw + ηv)`
    pub fn p(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p_map * x
    }

    /// `q(w; v) = (S(h(w; v)); p(w; v) + ητAᵀf)`, on the stacked `3n²` vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n2 = self.n2;
        let h = self.h(x);
        let radius = 1.0 / self.beta;
        let mut out = DVector::zeros(3 * n2);
        for i in 0..n2 {
            let (a0, a1) = (h[i], h[i + n2]);
            let norm = a0.hypot(a1);
            if norm > radius {
                let s = (norm - radius) / norm;
                out[i] = a0 * s;
                out[i + n2] = a1 * s;
            }
        }
        let v = self.p(x) + &self.offset;
        out.rows_mut(2 * n2, n2).copy_from(&v);
        out
    }

    /// `v = ηT u + ητAᵀf` for the `u` that produced the next `w`.
    pub fn v_of(&self, u: &DVector<f64>) -> DVector<f64> {
        (&self.t_mat * u + &self.tau_atf) * self.eta
    }

    /// `u = H⁻¹(Dᵀw + ηv)`
    pub fn u_of(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.u_map * x
    }

    pub fn stack(&self, w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let n2 = self.n2;
        let mut x = DVector::zeros(3 * n2);
        x.rows_mut(0, 2 * n2).copy_from(w);
        x.rows_mut(2 * n2, n2).copy_from(v);
        x
    }
}

/// Spectral radius of `(RᵀR)_EE`: `RᵀR` restricted to the `w` rows and
/// columns of the pixels in `support_e` plus the whole `v` block.
///
/// With `support_e` empty the `v` block remains, so the result is generally
/// nonzero.
pub fn spectral_factor(dp: &DenseProblem, support_e: &[usize]) -> f64 {
    let n2 = dp.pixels();
    let mut keep: Vec<usize> = support_e.to_vec();
    keep.sort_unstable();
    keep.dedup();
    let mut idx: Vec<usize> = keep.clone();
    idx.extend(keep.iter().map(|&i| i + n2));
    idx.extend(2 * n2..3 * n2);
    let rtr = dp.rtr();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| rtr[(idx[r], idx[c])]);
    spectral_radius_sym(sub)
}

pub fn spectral_radius_sym(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .fold(0.0, |acc: f64, e| acc.max(e.abs()))
}

/// Weighted norm `‖x‖_{DᵀD + η²T²}`.
pub fn error_norm(dp: &DenseProblem, x: &DVector<f64>) -> f64 {
    let dx = &dp.d * x;
    let tx = &dp.t_mat * x * dp.eta;
    (dx.norm_squared() + tx.norm_squared()).sqrt()
}

/// A small random instance: a piecewise-constant image observed through a
/// Gaussian encoder with additive noise.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub n: usize,
    pub truth: Image,
    pub operator: SensingOperator,
    pub f: Vec<f64>,
}

pub fn random_instance(n: usize, m: usize, sigma: f64, seed: u64) -> Result<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    // two random axis-aligned blocks on a flat background
    let mut data = vec![0.0; n * n];
    for level in [1.0, 0.5] {
        let r0 = (uniform(&mut rng) * n as f64 * 0.6) as usize;
        let c0 = (uniform(&mut rng) * n as f64 * 0.6) as usize;
        let h = 2 + (uniform(&mut rng) * (n as f64 * 0.4)) as usize;
        let w = 2 + (uniform(&mut rng) * (n as f64 * 0.4)) as usize;
        for r in r0..(r0 + h).min(n) {
            for c in c0..(c0 + w).min(n) {
                data[r * n + c] += level;
            }
        }
    }
    let truth = Image::new(n, data)?;
    let operator = make_gaussian_operator(m, n * n, seed)?;
    let f = synthesize_observation(&operator, &truth, sigma, seed ^ 0xA5A5)?.values;
    Ok(RandomInstance {
        n,
        truth,
        operator,
        f,
    })
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    // Φ-free squashing into (0, 1); only spread matters here
    0.5 + 0.5 * (z / 2.0).tanh()
}

impl RandomInstance {
    pub fn dense(&self, mu: f64, beta: f64, tau: f64) -> Result<DenseProblem> {
        DenseProblem::from_operator(&self.operator, &self.f, self.n, mu, beta, tau)
    }
}

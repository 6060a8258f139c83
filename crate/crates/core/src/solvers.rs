//! FTVCS (penalty splitting with continuation) and IADM (inexact ADM).
//!
//! Both solvers linearize `½‖Au − f‖²` at the current iterate and add a
//! proximal term of weight `μ/(2τ)`, so every `u` update is the
//! FFT-diagonalizable system
//!
//! ```text
//! (DᵀD + μ/(βτ) I) u = Dᵀ target + μ/(βτ) (u_k − τ g_k),   g_k = Aᵀ(Au_k − f)
//! ```
//!
//! with `target = w` (FTVCS) or `target = w − λ/β` (IADM).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::grad_ops::{apply_d, apply_dt, norm2, shrink_field, GradientField, Image, SpectralSolver};
use crate::imaging::{objective_penalty, objective_tv_l2, relative_error};
use crate::par::Execution;
use crate::sensing::{estimate_spectral_radius, SensingOperator, SpectralEstimate};

/// Floor on the denominator of [`relative_change`].
pub const REL_CHANGE_FLOOR: f64 = 1e-12;

/// `‖u_new − u_old‖ / max(‖u_old‖, 1e-12)`.
pub fn relative_change(u_new: &Image, u_old: &Image) -> f64 {
    let diff: f64 = u_new
        .as_slice()
        .iter()
        .zip(u_old.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    diff / u_old.norm().max(REL_CHANGE_FLOOR)
}

/// Sensing operator, measurements and image size.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub operator: &'a SensingOperator,
    pub f: &'a [f64],
    pub n: usize,
}

impl<'a> Problem<'a> {
    pub fn new(operator: &'a SensingOperator, f: &'a [f64], n: usize) -> Result<Self> {
        if operator.n2() != n * n {
            return Err(Error::dims(format!(
                "operator acts on {} unknowns, image has {}",
                operator.n2(),
                n * n
            )));
        }
        if f.len() != operator.m() {
            return Err(Error::dims(format!(
                "observation has {} values, operator produces {}",
                f.len(),
                operator.m()
            )));
        }
        Ok(Problem { operator, f, n })
    }

    /// `Aᵀf`, the initial guess.
    pub fn backprojection(&self) -> Result<Image> {
        Ok(Image::from_vec_unchecked(self.n, self.operator.apply_adjoint(self.f)?))
    }
}

/// How the proximal step `τ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauRule {
    Explicit(f64),
    /// `τ = fraction / λ̂max(AᵀA)`, with `fraction ∈ (0, 2)`.
    FractionOfBound(f64),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum InitialGuess {
    #[default]
    Backprojection,
    Zero,
    Given(Image),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub mu: f64,
    /// Penalty / augmented-Lagrangian weight used by IADM.
    pub beta: f64,
    pub tau_rule: TauRule,
    pub tol_rel_change: f64,
    /// Per continuation stage for FTVCS.
    pub max_iters: usize,
    /// Strictly increasing continuation sequence for FTVCS.
    pub beta_schedule: Vec<f64>,
    pub record_trace: bool,
    /// Keep every `(u, w)` iterate (small problems only).
    pub keep_iterates: bool,
    /// Used for relative-error logging only.
    pub oracle_truth: Option<Image>,
    pub initial_guess: InitialGuess,
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: 200.0,
            beta: 8.0,
            tau_rule: TauRule::FractionOfBound(1.9),
            tol_rel_change: 1e-3,
            max_iters: 3000,
            beta_schedule: vec![16.0, 32.0, 64.0, 128.0],
            record_trace: false,
            keep_iterates: false,
            oracle_truth: None,
            initial_guess: InitialGuess::Backprojection,
            power_tol: 1e-6,
            power_max_iters: 1000,
            execution: Execution::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        positive("mu", self.mu)?;
        positive("beta", self.beta)?;
        positive("tol_rel_change", self.tol_rel_change)?;
        positive("power_tol", self.power_tol)?;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        match self.tau_rule {
            TauRule::Explicit(t) => positive("tau", t)?,
            TauRule::FractionOfBound(f) => {
                if !(f > 0.0 && f < 2.0) {
                    return Err(Error::invalid(format!(
                        "tau fraction must lie in (0, 2) for convergence, got {f}"
                    )));
                }
            }
        }
        if self.beta_schedule.is_empty() {
            return Err(Error::invalid("beta_schedule must not be empty"));
        }
        for b in &self.beta_schedule {
            positive("beta_schedule entry", *b)?;
        }
        if self.beta_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("beta_schedule must be strictly increasing"));
        }
        Ok(())
    }

    /// Resolves `τ` against the operator's spectral bound.
    pub fn resolve_tau(&self, op: &SensingOperator) -> Result<(f64, SpectralEstimate)> {
        let est = estimate_spectral_radius(op, self.power_tol, self.power_max_iters)?;
        let bound = est.step_bound();
        let tau = match self.tau_rule {
            TauRule::FractionOfBound(f) => f / bound,
            TauRule::Explicit(t) => {
                if t * bound >= 2.0 {
                    return Err(Error::invalid(format!(
                        "tau = {t} violates tau * lambda_max(AᵀA) < 2 (lambda_max ≈ {bound:.6})"
                    )));
                }
                t
            }
        };
        Ok((tau, est))
    }
}

/// Iterates of either solver. `lambda` stays zero for FTVCS.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub u: Image,
    pub w: GradientField,
    pub lambda: GradientField,
    /// Gradient `Aᵀ(Au − f)` at the iterate the last step started from.
    pub g: Image,
    pub iter: usize,
    pub last_rel_change: f64,
}

impl SolverState {
    pub fn new(u0: Image) -> Self {
        let n = u0.n();
        SolverState {
            u: u0,
            w: GradientField::zeros(n),
            lambda: GradientField::zeros(n),
            g: Image::zeros(n),
            iter: 0,
            last_rel_change: f64::INFINITY,
        }
    }
}

/// Fixed `(μ, β, τ)` plus the prepared FFT solver for one solver stage.
#[derive(Clone, Debug)]
pub struct StepKernel<'a> {
    problem: Problem<'a>,
    mu: f64,
    beta: f64,
    tau: f64,
    eta2: f64,
    spectral: SpectralSolver,
    exec: Execution,
}

impl<'a> StepKernel<'a> {
    pub fn new(problem: Problem<'a>, mu: f64, beta: f64, tau: f64, exec: Execution) -> Result<Self> {
        positive("mu", mu)?;
        positive("beta", beta)?;
        positive("tau", tau)?;
        let eta2 = mu / (beta * tau);
        let spectral = SpectralSolver::with_execution(problem.n, eta2, exec)?;
        Ok(StepKernel {
            problem,
            mu,
            beta,
            tau,
            eta2,
            spectral,
            exec,
        })
    }

    /// Same problem and `(μ, τ)` at a new `β`, reusing the FFT plans.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        positive("beta", beta)?;
        let eta2 = self.mu / (beta * self.tau);
        Ok(StepKernel {
            beta,
            eta2,
            spectral: self.spectral.with_shift(eta2)?,
            ..self.clone()
        })
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

    /// `η² = μ/(βτ)`
    pub fn shift(&self) -> f64 {
        self.eta2
    }

    pub fn problem(&self) -> &Problem<'a> {
        &self.problem
    }

    fn gradient(&self, u: &Image) -> Result<Image> {
        let op = self.problem.operator;
        let mut r = op.apply(u.as_slice())?;
        r.iter_mut().zip(self.problem.f).for_each(|(a, b)| *a -= b);
        Ok(Image::from_vec_unchecked(self.problem.n, op.apply_adjoint(&r)?))
    }

    fn u_update(&self, u: &Image, g: &Image, target: &GradientField) -> Result<Image> {
        let dtw = apply_dt(target);
        let tau = self.tau;
        let eta2 = self.eta2;
        let rhs: Vec<f64> = dtw
            .as_slice()
            .iter()
            .zip(u.as_slice())
            .zip(g.as_slice())
            .map(|((d, x), gi)| d + eta2 * (x - tau * gi))
            .collect();
        self.spectral.solve(&Image::from_vec_unchecked(self.problem.n, rhs))
    }

    /// One FTVCS iteration: `w = S(Du)`, then the linearized `u` update.
    pub fn ftvcs_step(&self, state: &SolverState) -> Result<SolverState> {
        let iter = state.iter + 1;
        let w = shrink_field(&apply_d(&state.u), 1.0 / self.beta, self.exec);
        finite("w", w.is_finite(), iter)?;
        let g = self.gradient(&state.u)?;
        finite("g", g.is_finite(), iter)?;
        let u = self.u_update(&state.u, &g, &w)?;
        finite("u", u.is_finite(), iter)?;
        let last_rel_change = relative_change(&u, &state.u);
        Ok(SolverState {
            u,
            w,
            lambda: state.lambda.clone(),
            g,
            iter,
            last_rel_change,
        })
    }

    /// One IADM iteration on the augmented Lagrangian
    /// `Σ‖w_i‖ − λᵀ(w − Du) + (β/2)‖w − Du‖² + (μ/2)‖Au − f‖²`:
    /// `w = S(Du + λ/β)`, linearized `u` update with target `w − λ/β`,
    /// then `λ ← λ − β(w − Du)`.
    pub fn iadm_step(&self, state: &SolverState) -> Result<SolverState> {
        let iter = state.iter + 1;
        let inv_beta = 1.0 / self.beta;
        let shifted = apply_d(&state.u).axpy(inv_beta, &state.lambda);
        let w = shrink_field(&shifted, inv_beta, self.exec);
        finite("w", w.is_finite(), iter)?;
        let g = self.gradient(&state.u)?;
        finite("g", g.is_finite(), iter)?;
        let target = w.axpy(-inv_beta, &state.lambda);
        let u = self.u_update(&state.u, &g, &target)?;
        finite("u", u.is_finite(), iter)?;
        let gap = w.axpy(-1.0, &apply_d(&u));
        let lambda = state.lambda.axpy(-self.beta, &gap);
        finite("lambda", lambda.is_finite(), iter)?;
        let last_rel_change = relative_change(&u, &state.u);
        Ok(SolverState {
            u,
            w,
            lambda,
            g,
            iter,
            last_rel_change,
        })
    }
}

fn finite(quantity: &'static str, ok: bool, iter: usize) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Divergence { quantity, iter })
    }
}

/// One row of the convergence history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub beta: f64,
    /// Cumulative solver time, excluding trace evaluation.
    pub wall_seconds: f64,
    pub objective_tv: f64,
    /// FTVCS only.
    pub objective_penalty: Option<f64>,
    /// `‖w − Du‖`, IADM only.
    pub constraint_residual: Option<f64>,
    pub rel_change: f64,
    pub rel_error: Option<f64>,
    /// Set on the last record of a stage that stopped at `max_iters`.
    pub stage_exhausted: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// `β` values of stages that hit `max_iters` before the stopping rule.
    pub exhausted_stages: Vec<f64>,
    pub converged: bool,
}

/// An `(u, w)` pair kept when `keep_iterates` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub beta: f64,
    pub u: Image,
    pub w: GradientField,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub u: Image,
    pub state: SolverState,
    pub trace: IterationTrace,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub tau: f64,
    pub spectral_estimate: SpectralEstimate,
    pub iterates: Vec<Snapshot>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Method {
    Ftvcs,
    Iadm,
}

fn initial_state(problem: &Problem<'_>, config: &SolverConfig) -> Result<SolverState> {
    let u0 = match &config.initial_guess {
        InitialGuess::Backprojection => problem.backprojection()?,
        InitialGuess::Zero => Image::zeros(problem.n),
        InitialGuess::Given(img) => {
            if img.n() != problem.n {
                return Err(Error::dims("initial guess has the wrong size"));
            }
            img.clone()
        }
    };
    if !u0.is_finite() {
        return Err(Error::invalid("initial guess is not finite"));
    }
    Ok(SolverState::new(u0))
}

fn run(problem: &Problem<'_>, config: &SolverConfig, method: Method) -> Result<RunOutput> {
    config.validate()?;
    if let Some(t) = &config.oracle_truth {
        if t.n() != problem.n {
            return Err(Error::dims("oracle truth has the wrong size"));
        }
    }
    let (tau, spectral_estimate) = config.resolve_tau(problem.operator)?;
    let stages: Vec<f64> = match method {
        Method::Ftvcs => config.beta_schedule.clone(),
        Method::Iadm => vec![config.beta],
    };

    let mut state = initial_state(problem, config)?;
    let mut trace = IterationTrace::default();
    let mut iterates = Vec::new();
    let mut elapsed = 0.0;
    let mut kernel = StepKernel::new(*problem, config.mu, stages[0], tau, config.execution)?;
    let mut all_converged = true;

    for (s, &beta) in stages.iter().enumerate() {
        if s > 0 {
            kernel = kernel.with_beta(beta)?;
        }
        let mut stage_converged = false;
        for k in 0..config.max_iters {
            let started = Instant::now();
            let next = match method {
                Method::Ftvcs => kernel.ftvcs_step(&state)?,
                Method::Iadm => kernel.iadm_step(&state)?,
            };
            elapsed += started.elapsed().as_secs_f64();
            state = next;
            stage_converged = state.last_rel_change <= config.tol_rel_change;
            let exhausted = !stage_converged && k + 1 == config.max_iters;

            if config.record_trace {
                trace.records.push(record(problem, config, &kernel, &state, method, elapsed, exhausted)?);
            }
            if config.keep_iterates {
                iterates.push(Snapshot {
                    iter: state.iter,
                    beta,
                    u: state.u.clone(),
                    w: state.w.clone(),
                });
            }
            if stage_converged {
                break;
            }
        }
        if !stage_converged {
            trace.exhausted_stages.push(beta);
            all_converged = false;
        }
    }
    trace.converged = all_converged;
    Ok(RunOutput {
        u: state.u.clone(),
        iterations: state.iter,
        state,
        trace,
        wall_seconds: elapsed,
        tau,
        spectral_estimate,
        iterates,
    })
}

fn record(
    problem: &Problem<'_>,
    config: &SolverConfig,
    kernel: &StepKernel<'_>,
    state: &SolverState,
    method: Method,
    elapsed: f64,
    stage_exhausted: bool,
) -> Result<IterationRecord> {
    let report = objective_tv_l2(&state.u, problem.operator, problem.f, config.mu, None)?;
    let (objective_penalty, constraint_residual) = match method {
        Method::Ftvcs => (
            Some(objective_penalty(
                &state.u,
                &state.w,
                problem.operator,
                problem.f,
                config.mu,
                kernel.beta(),
            )?),
            None,
        ),
        Method::Iadm => (None, Some(state.w.axpy(-1.0, &apply_d(&state.u)).norm())),
    };
    let rel_error = config
        .oracle_truth
        .as_ref()
        .map(|t| relative_error(&state.u, t))
        .transpose()?;
    Ok(IterationRecord {
        iter: state.iter,
        beta: kernel.beta(),
        wall_seconds: elapsed,
        objective_tv: report.objective_tv,
        objective_penalty,
        constraint_residual,
        rel_change: state.last_rel_change,
        rel_error,
        stage_exhausted,
    })
}

/// FTVCS with continuation over `config.beta_schedule`, warm-starting each
/// stage from the previous one and stopping each stage on the relative-change
/// rule.
pub fn run_ftvcs(problem: &Problem<'_>, config: &SolverConfig) -> Result<RunOutput> {
    run(problem, config, Method::Ftvcs)
}

/// IADM at fixed `config.beta`.
pub fn run_iadm(problem: &Problem<'_>, config: &SolverConfig) -> Result<RunOutput> {
    run(problem, config, Method::Iadm)
}

/// `‖w − Du‖`
pub fn constraint_residual(u: &Image, w: &GradientField) -> f64 {
    norm2(w.axpy(-1.0, &apply_d(u)).as_slice())
}

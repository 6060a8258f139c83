//! Total-variation image reconstruction from random linear projections.
//!
//! The crate solves the TV/L2 model
//!
//! ```text
//! min_u  sum_i ||D_i u|| + (mu/2) ||A u - f||^2
//! ```
//!
//! where `D_i` is the periodic forward-difference gradient at pixel `i` and `A`
//! is a compressive sensing encoder. Two first-order solvers are provided:
//!
//! * [`solvers::run_ftvcs`]: alternating minimization of the quadratic-penalty
//!   splitting with a linearized, FFT-diagonalized `u` step and continuation on
//!   the penalty weight.
//! * [`solvers::run_iadm`]: an inexact alternating direction method on the
//!   augmented Lagrangian, converging to the TV/L2 solution at a fixed penalty.
//!
//! [`reference_oracle`] holds dense small-scale machinery used to certify both
//! solvers (exact penalty solutions, KKT residuals, fixed-point maps).
//!
//! Data-parallel kernels use rayon when the `parallel` feature is enabled
//! (the default); every kernel also has a sequential path selected through
//! [`Execution`].

pub mod error;
pub mod grad_ops;
pub mod imaging;
pub mod par;
pub mod reference_oracle;
pub mod sensing;
pub mod solvers;

pub use error::{Error, Result};
pub use grad_ops::{GradientField, Image, SpectralSolver};
pub use imaging::QualityReport;
pub use par::Execution;
pub use sensing::{Observation, SensingKind, SensingOperator};
pub use solvers::{IterationTrace, Problem, SolverConfig, SolverState};

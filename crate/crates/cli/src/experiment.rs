//! Builds a problem from a spec, runs the solvers and writes the artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use tvcs::imaging::{objective_tv_l2, read_image, shepp_logan, write_image};
use tvcs::sensing::{
    make_gaussian_operator, make_orthonormal_gaussian_operator, make_partial_dct_operator,
    synthesize_observation,
};
use tvcs::solvers::{run_ftvcs, run_iadm, Problem, RunOutput, SolverConfig};
use tvcs::{Image, SensingOperator};

use crate::config::{ExperimentSpec, Input, Sensing};
use crate::error::{CliError, Result};
use crate::trace::write_trace;

/// Offsets mixed into the experiment seed so the sensing matrix and the
/// noise can be reproduced independently.
pub const MATRIX_SEED_OFFSET: u64 = 0;
pub const NOISE_SEED_OFFSET: u64 = 1000;

pub const SUMMARY_HEADER: [&str; 6] = ["solver", "mu", "RE_percent", "objective", "iters", "wall_seconds"];

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub solver: String,
    pub mu: f64,
    pub re_percent: f64,
    pub objective: f64,
    pub iters: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub output_dir: PathBuf,
    pub rows: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

fn load_input(input: &Input) -> Result<Image> {
    match input {
        Input::Phantom(n) => Ok(shepp_logan(*n)?),
        Input::File(path) => read_image(path).map_err(|e| match e {
            tvcs::Error::Io { .. } => CliError::Validation(format!("cannot read input image: {e}")),
            other => other.into(),
        }),
    }
}

fn build_operator(spec: &ExperimentSpec, m: usize, n2: usize) -> Result<SensingOperator> {
    let seed = spec.seed.wrapping_add(MATRIX_SEED_OFFSET);
    let op = match spec.sensing {
        Sensing::Gaussian => make_orthonormal_gaussian_operator(m, n2, seed)?,
        Sensing::GaussianIid => make_gaussian_operator(m, n2, seed)?,
        Sensing::PartialDct => make_partial_dct_operator(m, n2, seed)?,
    };
    Ok(op.with_execution(spec.solver_config.execution))
}

fn prepare_output_dir(dir: &Path) -> Result<()> {
    let unusable = |e: std::io::Error| {
        CliError::Validation(format!("output directory {} is not writable: {e}", dir.display()))
    };
    fs::create_dir_all(dir).map_err(unusable)?;
    // fail before any solver time is spent
    let probe = dir.join(".tvcs-write-probe");
    fs::write(&probe, b"").map_err(unusable)?;
    fs::remove_file(&probe).map_err(unusable)
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.solver.clone(),
            r.mu.to_string(),
            r.re_percent.to_string(),
            r.objective.to_string(),
            r.iters.to_string(),
            r.wall_seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn run_solver(name: &str, problem: &Problem<'_>, config: &SolverConfig) -> Result<RunOutput> {
    Ok(match name {
        "ftvcs" => run_ftvcs(problem, config)?,
        _ => run_iadm(problem, config)?,
    })
}

/// Runs every requested solver and writes `recon_<solver>.pgm`,
/// `trace_<solver>.csv` and `summary.csv` into `output_dir`. On error every
/// file written so far is removed.
pub fn run_experiment(spec: &ExperimentSpec, output_dir: &Path) -> Result<ExperimentReport> {
    let truth = load_input(&spec.input)?;
    let n = truth.n();
    let m = spec.validate_for_size(n)?;
    prepare_output_dir(output_dir)?;

    let mut files = Vec::new();
    match execute(spec, &truth, m, output_dir, &mut files) {
        Ok(rows) => Ok(ExperimentReport {
            output_dir: output_dir.to_path_buf(),
            rows,
            files,
        }),
        Err(e) => {
            for f in &files {
                let _ = fs::remove_file(f);
            }
            Err(e)
        }
    }
}

fn execute(
    spec: &ExperimentSpec,
    truth: &Image,
    m: usize,
    dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<Vec<SummaryRow>> {
    let n = truth.n();
    let op = build_operator(spec, m, n * n)?;
    let noise_seed = spec.seed.wrapping_add(NOISE_SEED_OFFSET);
    let obs = synthesize_observation(&op, truth, spec.sigma, noise_seed)?;
    let problem = Problem::new(&op, &obs.values, n)?;
    let config = SolverConfig {
        record_trace: true,
        oracle_truth: Some(truth.clone()),
        ..spec.solver_config.clone()
    };

    let mut rows = Vec::new();
    // solvers run one after the other so their timings are comparable
    for &name in spec.solver.names() {
        let out = run_solver(name, &problem, &config)?;
        let quality = objective_tv_l2(&out.u, &op, &obs.values, config.mu, Some(truth))?;

        let recon = dir.join(format!("recon_{name}.pgm"));
        files.push(recon.clone());
        write_image(&recon, &out.u)?;
        let trace = dir.join(format!("trace_{name}.csv"));
        files.push(trace.clone());
        write_trace(&trace, &out.trace)?;

        rows.push(SummaryRow {
            solver: name.to_string(),
            mu: config.mu,
            re_percent: quality.rel_error_percent.unwrap_or(f64::NAN),
            objective: quality.objective_tv,
            iters: out.iterations,
            wall_seconds: out.wall_seconds,
        });
    }
    let summary = dir.join("summary.csv");
    files.push(summary.clone());
    write_summary(&summary, &rows)?;
    Ok(rows)
}

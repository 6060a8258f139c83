//! `key = value` experiment files.
//!
//! ```text
//! # partial-DCT run at 128x128
//! input = phantom:128
//! sensing = partial-dct
//! mu = 500
//! beta = 64
//! tol = 5e-5
//! solver = iadm
//! ```

use std::collections::HashSet;
use std::path::PathBuf;
use std::str::FromStr;

use tvcs::sensing::DEFAULT_MAX_DENSE_ENTRIES;
use tvcs::solvers::{SolverConfig, TauRule};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Phantom(usize),
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sensing {
    /// Gaussian matrix with orthonormalized rows.
    Gaussian,
    /// Gaussian matrix with i.i.d. `N(0, 1/m)` entries.
    GaussianIid,
    PartialDct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Ftvcs,
    Iadm,
    Both,
}

impl SolverChoice {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            SolverChoice::Ftvcs => &["ftvcs"],
            SolverChoice::Iadm => &["iadm"],
            SolverChoice::Both => &["ftvcs", "iadm"],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub input: Input,
    pub sensing: Sensing,
    pub sample_ratio: f64,
    pub sigma: f64,
    pub solver: SolverChoice,
    pub solver_config: SolverConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            input: Input::Phantom(64),
            sensing: Sensing::Gaussian,
            sample_ratio: 0.3,
            sigma: 0.001,
            solver: SolverChoice::Both,
            solver_config: SolverConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

const KEYS: [&str; 13] = [
    "input",
    "sensing",
    "sample_ratio",
    "sigma",
    "solver",
    "mu",
    "beta",
    "beta_schedule",
    "tau_rule",
    "tol",
    "max_iters",
    "seed",
    "output_dir",
];

fn number<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse `{value}` as a number"))
}

fn positive(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = number(value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {value}"))
    }
}

fn parse_tau_rule(value: &str) -> std::result::Result<TauRule, String> {
    let mut parts = value.split_whitespace();
    let (kind, amount) = match (parts.next(), parts.next(), parts.next()) {
        (Some(k), Some(a), None) => (k, a),
        _ => return Err("expected `fraction <x>` or `explicit <tau>`".into()),
    };
    let amount = positive(amount)?;
    match kind {
        "fraction" if amount < 2.0 => Ok(TauRule::FractionOfBound(amount)),
        "fraction" => Err(format!(
            "fraction {amount} is outside (0, 2); convergence needs tau < 2/lambda_max"
        )),
        "explicit" => Ok(TauRule::Explicit(amount)),
        other => Err(format!("unknown rule `{other}`, expected `fraction` or `explicit`")),
    }
}

fn parse_schedule(value: &str) -> std::result::Result<Vec<f64>, String> {
    let betas = value
        .split(',')
        .map(|s| positive(s.trim()))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    if betas.windows(2).any(|p| p[1] <= p[0]) {
        return Err("values must be strictly increasing".into());
    }
    Ok(betas)
}

fn parse_input(value: &str) -> std::result::Result<Input, String> {
    if value == "phantom" {
        return Ok(Input::Phantom(64));
    }
    if let Some(size) = value.strip_prefix("phantom:") {
        let n: usize = number(size)?;
        if n < 8 {
            return Err(format!("phantom size must be at least 8, got {n}"));
        }
        return Ok(Input::Phantom(n));
    }
    if value.is_empty() {
        return Err("empty input path".into());
    }
    Ok(Input::File(PathBuf::from(value)))
}

fn apply(spec: &mut ExperimentSpec, key: &str, value: &str) -> std::result::Result<(), String> {
    let cfg = &mut spec.solver_config;
    match key {
        "input" => spec.input = parse_input(value)?,
        "sensing" => {
            spec.sensing = match value {
                "gaussian" => Sensing::Gaussian,
                "gaussian-iid" => Sensing::GaussianIid,
                "partial-dct" => Sensing::PartialDct,
                _ => return Err(format!("expected gaussian, gaussian-iid or partial-dct, got `{value}`")),
            }
        }
        "sample_ratio" => {
            let r = positive(value)?;
            if r > 1.0 {
                return Err(format!("must lie in (0, 1], got {r}"));
            }
            spec.sample_ratio = r;
        }
        "sigma" => {
            let s: f64 = number(value)?;
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("must be nonnegative, got {value}"));
            }
            spec.sigma = s;
        }
        "solver" => {
            spec.solver = match value {
                "ftvcs" => SolverChoice::Ftvcs,
                "iadm" => SolverChoice::Iadm,
                "both" => SolverChoice::Both,
                _ => return Err(format!("expected ftvcs, iadm or both, got `{value}`")),
            }
        }
        "mu" => cfg.mu = positive(value)?,
        "beta" => cfg.beta = positive(value)?,
        "beta_schedule" => cfg.beta_schedule = parse_schedule(value)?,
        "tau_rule" => cfg.tau_rule = parse_tau_rule(value)?,
        "tol" => cfg.tol_rel_change = positive(value)?,
        "max_iters" => {
            let k: usize = number(value)?;
            if k == 0 {
                return Err("must be at least 1".into());
            }
            cfg.max_iters = k;
        }
        "seed" => spec.seed = number(value)?,
        "output_dir" => spec.output_dir = Some(PathBuf::from(value)),
        _ => unreachable!("keys are checked before dispatch"),
    }
    Ok(())
}

/// Parses and validates an experiment file. Missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |key: &str, message: String| CliError::Config {
            line,
            key: key.to_string(),
            message,
        };
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(content, "expected `key = value`".into()))?;
        if !KEYS.contains(&key) {
            return Err(err(key, "unknown key".into()));
        }
        if !seen.insert(key.to_string()) {
            return Err(err(key, "duplicate key".into()));
        }
        apply(&mut spec, key, value).map_err(|m| err(key, m))?;
    }
    Ok(spec)
}

impl ExperimentSpec {
    /// Checks the invariants that depend on the image size. `n` is the side
    /// length of the input image.
    pub fn validate_for_size(&self, n: usize) -> Result<usize> {
        let n2 = n * n;
        let m = self.measurements(n);
        if m < 1 {
            return Err(CliError::Validation(format!(
                "sample_ratio {} gives no measurements for a {n}x{n} image",
                self.sample_ratio
            )));
        }
        if matches!(self.sensing, Sensing::Gaussian | Sensing::GaussianIid)
            && m.saturating_mul(n2) > DEFAULT_MAX_DENSE_ENTRIES
        {
            return Err(CliError::Validation(format!(
                "a dense Gaussian matrix for a {n}x{n} image at ratio {} needs {:.0} MiB; \
                 use sensing = partial-dct",
                self.sample_ratio,
                (m * n2) as f64 * 8.0 / (1u64 << 20) as f64
            )));
        }
        self.solver_config.validate()?;
        Ok(m)
    }

    pub fn measurements(&self, n: usize) -> usize {
        (self.sample_ratio * (n * n) as f64).round() as usize
    }
}

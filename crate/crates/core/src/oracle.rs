//! Accuracy sources for a compressed plan, plus the exhaustive grid search
//! used as a reference optimum.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressor::DevicePartition;
use crate::env::{EnvError, Environment};

/// Default base accuracy of the uncompressed backbone.
pub const DEFAULT_BASE_ACCURACY: f64 = 0.9299;
/// Default total damage weight spread over the prunable layers.
pub const DEFAULT_DAMAGE_TOTAL: f64 = 0.3;
pub const DEFAULT_DAMAGE_EXPONENT: f64 = 2.0;
/// Placeholder replaced by the plan file path in external commands.
pub const PLAN_PLACEHOLDER: &str = "{plan}";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle command exited with {status}: {output}")]
    CommandFailed { status: String, output: String },
    #[error("oracle output is not a single decimal: {0:?}")]
    Unparseable(String),
    #[error("oracle accuracy {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("oracle command timed out after {0:?}")]
    Timeout(Duration),
    #[error("oracle command template lacks the {PLAN_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("oracle I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid surrogate: {0}")]
    InvalidSurrogate(String),
}

/// What an oracle sees of a plan.
#[derive(Debug, Clone, Copy)]
pub struct PlanView<'a> {
    pub split_layer_id: usize,
    pub actions: &'a [f64],
    /// Layers whose action does not change their width.
    pub masked: &'a [bool],
    pub encoder_ratio: f64,
}

/// Plan file handed to external accuracy commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlanFile {
    pub split_layer_id: usize,
    pub actions: Vec<f64>,
    pub encoder_ratio: f64,
}

pub trait AccuracyOracle: Send {
    fn accuracy(&mut self, plan: &PlanView<'_>) -> Result<f64, OracleError>;
}

/// κ = clamp(κ0 − Σ w_i (1 − a_i)^p, 0, 1); masked layers count as a_i = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub base_accuracy: f64,
    pub weights: Vec<f64>,
    pub exponent: f64,
}

impl SurrogateModel {
    pub fn new(base_accuracy: f64, weights: Vec<f64>, exponent: f64) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&base_accuracy) {
            return Err(OracleError::InvalidSurrogate(format!("base accuracy {base_accuracy}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(OracleError::InvalidSurrogate("weights must be finite and >= 0".into()));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(OracleError::InvalidSurrogate(format!("exponent {exponent}")));
        }
        Ok(Self {
            base_accuracy,
            weights,
            exponent,
        })
    }

    /// Weights proportional to each prunable layer's share of the prunable
    /// FLOPs, summing to `total`.
    pub fn flops_weighted(
        partition: &DevicePartition,
        base_accuracy: f64,
        total: f64,
        exponent: f64,
    ) -> Result<Self, OracleError> {
        let sum: u64 = partition.prunable.iter().map(|l| l.original_flops).sum();
        let weights = partition
            .prunable
            .iter()
            .map(|l| total * l.original_flops as f64 / sum.max(1) as f64)
            .collect();
        Self::new(base_accuracy, weights, exponent)
    }

    pub fn accuracy(&self, actions: &[f64], masked: &[bool]) -> f64 {
        let damage: f64 = self
            .weights
            .iter()
            .zip(actions)
            .enumerate()
            .map(|(i, (w, &a))| {
                let a = if masked.get(i).copied().unwrap_or(false) { 1.0 } else { a.min(1.0) };
                w * (1.0 - a).powf(self.exponent)
            })
            .sum();
        (self.base_accuracy - damage).clamp(0.0, 1.0)
    }
}

impl AccuracyOracle for SurrogateModel {
    fn accuracy(&mut self, plan: &PlanView<'_>) -> Result<f64, OracleError> {
        Ok(SurrogateModel::accuracy(self, plan.actions, plan.masked))
    }
}

/// Runs a shell command per plan; the command reads the plan file and prints
/// κ on its last output line.
#[derive(Debug, Clone)]
pub struct ExternalOracle {
    template: String,
    timeout: Duration,
    workdir: PathBuf,
}

impl ExternalOracle {
    pub fn new(template: impl Into<String>, timeout: Duration, workdir: impl Into<PathBuf>) -> Result<Self, OracleError> {
        let template = template.into();
        if !template.contains(PLAN_PLACEHOLDER) {
            return Err(OracleError::MissingPlaceholder);
        }
        Ok(Self {
            template,
            timeout,
            workdir: workdir.into(),
        })
    }

    /// Template without the placeholder check, for constant stubs.
    pub fn unchecked(template: impl Into<String>, timeout: Duration, workdir: impl Into<PathBuf>) -> Self {
        Self {
            template: template.into(),
            timeout,
            workdir: workdir.into(),
        }
    }

    pub fn run(&self, plan: &PlanView<'_>) -> Result<f64, OracleError> {
        let file = OraclePlanFile {
            split_layer_id: plan.split_layer_id,
            actions: plan.actions.to_vec(),
            encoder_ratio: plan.encoder_ratio,
        };
        std::fs::create_dir_all(&self.workdir)?;
        let tmp = tempfile::Builder::new()
            .prefix("plan-")
            .suffix(".json")
            .tempfile_in(&self.workdir)?;
        std::fs::write(tmp.path(), serde_json::to_vec_pretty(&file).expect("plan serializes"))?;
        let cmd = self.template.replace(PLAN_PLACEHOLDER, &tmp.path().to_string_lossy());

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let mut out = child.stdout.take().expect("piped stdout");
        let mut err = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            out.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            err.read_to_string(&mut s).map(|_| s)
        });
        let start = Instant::now();
        let status = loop {
            if let Some(st) = child.try_wait()? {
                break st;
            }
            if start.elapsed() > self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                return Err(OracleError::Timeout(self.timeout));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let stdout = out_reader.join().expect("reader thread")?;
        let stderr = err_reader.join().expect("reader thread")?;
        if !status.success() {
            return Err(OracleError::CommandFailed {
                status: status.to_string(),
                output: format!("{stdout}{stderr}").trim().to_string(),
            });
        }
        parse_accuracy(&stdout)
    }
}

impl AccuracyOracle for ExternalOracle {
    fn accuracy(&mut self, plan: &PlanView<'_>) -> Result<f64, OracleError> {
        self.run(plan)
    }
}

fn is_decimal(tok: &str) -> bool {
    let s = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], Some(&s[i + 1..])),
        None => (s, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = digits(int)
        && frac.is_none_or(digits)
        && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    let exp_ok = exp.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && digits(e)
    });
    mantissa_ok && exp_ok
}

/// κ from the last non-empty line of a command's output.
pub fn parse_accuracy(output: &str) -> Result<f64, OracleError> {
    let line = output
        .lines()
        .map(str::trim)
        .rev()
        .find(|l| !l.is_empty())
        .ok_or_else(|| OracleError::Unparseable(String::new()))?;
    if !is_decimal(line) {
        return Err(OracleError::Unparseable(line.to_string()));
    }
    let v: f64 = line
        .parse()
        .map_err(|_| OracleError::Unparseable(line.to_string()))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(OracleError::OutOfRange(v));
    }
    Ok(v)
}

/// Candidate preserved ratios for the exhaustive reference search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    values: Vec<f64>,
}

impl GridSpec {
    /// Sorts and de-duplicates; every value must lie in (0, 1].
    pub fn new(mut values: Vec<f64>) -> Result<Self, GridError> {
        if values.is_empty() {
            return Err(GridError::InvalidGrid("empty grid".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(GridError::InvalidGrid(format!("value {v} outside (0, 1]")));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values })
    }

    /// 0.1, 0.2, …, 1.0
    pub fn tenths() -> Self {
        Self::new((1..=10).map(|i| i as f64 / 10.0).collect()).expect("valid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid of {needed} points exceeds the budget of {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

pub const DEFAULT_GRID_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub actions: Vec<f64>,
    pub reward: f64,
    pub evaluated: u64,
}

/// Evaluates every action vector on the grid through `env` and returns the
/// best. Ties go to the lexicographically smallest action vector.
pub fn grid_search_reference(
    env: &mut dyn Environment,
    grid: &GridSpec,
    budget: u64,
) -> Result<GridResult, GridError> {
    let layers = env.max_layer();
    let g = grid.values();
    let needed = (g.len() as u128).checked_pow(layers as u32).unwrap_or(u128::MAX);
    if needed > budget as u128 {
        return Err(GridError::BudgetExceeded { needed, budget });
    }
    let mut idx = vec![0usize; layers];
    let mut actions = vec![g[0]; layers];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluated = 0u64;
    loop {
        let r = env.evaluate(&actions)?.terms.reward;
        evaluated += 1;
        // enumeration is in lexicographic order, so only a strict
        // improvement replaces the incumbent
        if best.as_ref().is_none_or(|(b, _)| r > *b) {
            best = Some((r, actions.clone()));
        }
        // odometer, last position fastest
        let mut pos = layers;
        loop {
            if pos == 0 {
                let (reward, actions) = best.expect("at least one evaluation");
                return Ok(GridResult {
                    actions,
                    reward,
                    evaluated,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < g.len() {
                actions[pos] = g[idx[pos]];
                break;
            }
            idx[pos] = 0;
            actions[pos] = g[0];
        }
    }
}

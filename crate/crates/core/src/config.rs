//! Run configuration (JSON, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ddpg::DdpgConfig;
use crate::latency::DeploymentProfile;
use crate::oracle::{DEFAULT_BASE_ACCURACY, DEFAULT_DAMAGE_EXPONENT, DEFAULT_DAMAGE_TOTAL, DEFAULT_GRID_BUDGET};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("config value out of range: {0}")]
    Range(String),
    #[error("config is missing the network path")]
    MissingNetwork,
}

/// Which split(s) to search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSelection {
    Layer(usize),
    All,
}

impl Serialize for SplitSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SplitSelection::Layer(id) => s.serialize_u64(*id as u64),
            SplitSelection::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for SplitSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Id(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Id(id) => Ok(SplitSelection::Layer(id)),
            Raw::Word(w) if w == "all" => Ok(SplitSelection::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "split must be a layer id or \"all\", got {w:?}"
            ))),
        }
    }
}

fn default_base_accuracy() -> f64 {
    DEFAULT_BASE_ACCURACY
}
fn default_damage_total() -> f64 {
    DEFAULT_DAMAGE_TOTAL
}
fn default_exponent() -> f64 {
    DEFAULT_DAMAGE_EXPONENT
}
fn default_timeout() -> f64 {
    600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OracleConfig {
    Surrogate {
        #[serde(default = "default_base_accuracy")]
        base_accuracy: f64,
        /// Σ w_i when `weights` is absent (FLOP-share weighting).
        #[serde(default = "default_damage_total")]
        damage_total: f64,
        #[serde(default = "default_exponent")]
        exponent: f64,
        /// Explicit per-prunable-layer damage weights.
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    External {
        /// Shell command; `{plan}` is replaced by the plan file path.
        command: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        /// Accuracy of the uncompressed model, used for the frontier floor.
        #[serde(default = "default_base_accuracy")]
        base_accuracy: f64,
    },
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig::Surrogate {
            base_accuracy: DEFAULT_BASE_ACCURACY,
            damage_total: DEFAULT_DAMAGE_TOTAL,
            exponent: DEFAULT_DAMAGE_EXPONENT,
            weights: None,
        }
    }
}

impl OracleConfig {
    pub fn base_accuracy(&self) -> f64 {
        match self {
            OracleConfig::Surrogate { base_accuracy, .. } | OracleConfig::External { base_accuracy, .. } => {
                *base_accuracy
            }
        }
    }
}

fn default_split() -> SplitSelection {
    SplitSelection::All
}
fn default_beta() -> f64 {
    0.5
}
fn default_profiles() -> Vec<DeploymentProfile> {
    vec![DeploymentProfile::default()]
}
fn default_budget() -> f64 {
    0.01
}
fn default_grid_budget() -> u64 {
    DEFAULT_GRID_BUDGET
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default = "default_split")]
    pub split: SplitSelection,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub ddpg: DdpgConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_profiles")]
    pub profiles: Vec<DeploymentProfile>,
    /// Largest accuracy loss (absolute) a frontier point may have.
    #[serde(default = "default_budget")]
    pub accuracy_loss_budget: f64,
    #[serde(default = "default_grid_budget")]
    pub grid_budget: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn network_path(&self) -> &Path {
        self.network.as_deref().expect("validated config has a network")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |msg: String| Err(ConfigError::Range(msg));
        if self.network.is_none() {
            return Err(ConfigError::MissingNetwork);
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return range(format!("beta = {} outside [0, 1]", self.beta));
        }
        let d = &self.ddpg;
        if !(d.tau > 0.0 && d.tau <= 1.0) {
            return range(format!("tau = {} outside (0, 1]", d.tau));
        }
        if d.batch_size < 1 {
            return range("batch_size must be >= 1".into());
        }
        if d.episodes < 1 {
            return range("episodes must be >= 1".into());
        }
        if d.buffer_capacity < 1 || d.hidden < 1 {
            return range("buffer_capacity and hidden must be >= 1".into());
        }
        if !(d.lr_actor > 0.0 && d.lr_critic > 0.0) {
            return range("learning rates must be positive".into());
        }
        if !(d.sigma_init >= 0.0 && d.sigma_min >= 0.0 && d.sigma_decay > 0.0 && d.sigma_decay <= 1.0) {
            return range("exploration schedule out of range".into());
        }
        if !(0.0..1.0).contains(&d.baseline_decay) {
            return range(format!("baseline_decay = {} outside [0, 1)", d.baseline_decay));
        }
        if !(d.action_floor > 0.0 && d.action_floor <= 1.0) {
            return range(format!("action_floor = {} outside (0, 1]", d.action_floor));
        }
        if !(0.0..=1.0).contains(&self.accuracy_loss_budget) {
            return range("accuracy_loss_budget outside [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.oracle.base_accuracy()) {
            return range("base_accuracy outside [0, 1]".into());
        }
        match &self.oracle {
            OracleConfig::Surrogate {
                damage_total,
                exponent,
                weights,
                ..
            } => {
                if !(*damage_total >= 0.0) || !(*exponent > 0.0) {
                    return range("surrogate damage_total must be >= 0 and exponent > 0".into());
                }
                if weights.as_ref().is_some_and(|w| w.iter().any(|x| !(*x >= 0.0))) {
                    return range("surrogate weights must be >= 0".into());
                }
            }
            OracleConfig::External { timeout_s, .. } => {
                if !(*timeout_s > 0.0) {
                    return range("timeout_s must be positive".into());
                }
            }
        }
        if self.profiles.is_empty() {
            return range("at least one deployment profile is required".into());
        }
        for p in &self.profiles {
            p.validate().map_err(ConfigError::Range)?;
        }
        Ok(())
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(n) = &self.network {
            if n.is_relative() {
                self.network = Some(base.join(n));
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }
}

/// Parses and validates a configuration. Relative paths are resolved
/// against `base_dir` when given.
pub fn load_config(content: &str, base_dir: Option<&Path>) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = serde_json::from_str(content).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    if let Some(base) = base_dir {
        cfg.resolve_paths(base);
    }
    Ok(cfg)
}

pub fn load_config_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let content =
        std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    load_config(&content, Some(path.parent().unwrap_or(Path::new("."))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = load_config(r#"{"network": "net.json", "split": 3}"#, None).unwrap();
        assert_eq!(c.split, SplitSelection::Layer(3));
        assert_eq!(c.ddpg.episodes, 1100);
        assert_eq!(c.ddpg.tau, 0.01);
        assert_eq!(c.ddpg.batch_size, 64);
        assert_eq!(c.ddpg.lr_actor, 0.001);
        assert_eq!(c.ddpg.lr_critic, 0.0001);
        assert_eq!(c.ddpg.buffer_capacity, 2000);
        assert_eq!(c.ddpg.warmup(), 1333);
        assert_eq!(c.seed, 0);
        assert_eq!(c.oracle.base_accuracy(), 0.9299);
    }

    #[test]
    fn split_all() {
        let c = load_config(r#"{"network": "n.json", "split": "all"}"#, None).unwrap();
        assert_eq!(c.split, SplitSelection::All);
        assert!(load_config(r#"{"network": "n.json", "split": "some"}"#, None).is_err());
    }

    #[test]
    fn range_and_strictness_errors() {
        assert!(matches!(
            load_config(r#"{"network": "n", "beta": 1.5}"#, None),
            Err(ConfigError::Range(_))
        ));
        assert!(matches!(
            load_config(r#"{"network": "n", "ddpg": {"tau": 0}}"#, None),
            Err(ConfigError::Range(_))
        ));
        assert!(matches!(
            load_config(r#"{"network": "n", "ddpg": {"batch_size": 0}}"#, None),
            Err(ConfigError::Range(_))
        ));
        assert!(matches!(
            load_config(r#"{"network": "n", "colour": 1}"#, None),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            load_config(r#"{"network": "n", "ddpg": {"gamma": 0.9}}"#, None),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(load_config(r#"{"split": 1}"#, None), Err(ConfigError::MissingNetwork)));
    }

    #[test]
    fn oracle_variants() {
        let c = load_config(
            r#"{"network": "n", "oracle": {"kind": "external", "command": "eval {plan}"}}"#,
            None,
        )
        .unwrap();
        assert!(matches!(c.oracle, OracleConfig::External { timeout_s, .. } if timeout_s == 600.0));
        assert!(load_config(r#"{"network": "n", "oracle": {"kind": "surrogate", "bogus": 1}}"#, None).is_err());
    }

    #[test]
    fn relative_paths_follow_config() {
        let c = load_config(r#"{"network": "net.json"}"#, Some(Path::new("/tmp/cfg"))).unwrap();
        assert_eq!(c.network_path(), Path::new("/tmp/cfg/net.json"));
        assert_eq!(c.output_dir, Path::new("/tmp/cfg/out"));
    }
}

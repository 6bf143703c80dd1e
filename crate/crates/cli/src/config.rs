//! Line-oriented `key = value` experiment configuration.
//!
//! The format is deliberately flat and dependency-free: one assignment per
//! line, `#` starts a comment, unknown and duplicate keys are rejected
//! with line numbers, and every missing key takes a documented default.

use alqr::harness::{format_value, AgentSelector, ExperimentConfig, HarnessError, SystemSpec};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// All recognized keys, in render order.
const KEYS: [&str; 12] = [
    "system", "agents", "T", "warmup", "seeds", "base_seed", "delta", "lambda", "L", "c",
    "alpha0", "out_dir",
];

/// Errors from [`parse_config`], each carrying the offending line.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// The line is not a `key = value` assignment.
    Parse {
        /// 1-based line number.
        line: usize,
        /// What went wrong.
        message: String,
    },
    /// The key is not one of the documented settings.
    UnknownKey {
        /// 1-based line number.
        line: usize,
        /// The unrecognized key.
        key: String,
    },
    /// The key appeared more than once.
    DuplicateKey {
        /// 1-based line number of the second appearance.
        line: usize,
        /// The repeated key.
        key: String,
    },
    /// The value does not parse or violates the key's range.
    InvalidValue {
        /// 1-based line number.
        line: usize,
        /// The key whose value is bad.
        key: String,
        /// What went wrong.
        message: String,
    },
    /// The assembled configuration fails cross-field validation.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::UnknownKey { line, key } => {
                write!(f, "line {line}: unknown key `{key}`")
            }
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "line {line}: duplicate key `{key}`")
            }
            ConfigError::InvalidValue { line, key, message } => {
                write!(f, "line {line}: invalid value for `{key}`: {message}")
            }
            ConfigError::Invalid(message) => write!(f, "invalid configuration: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses a configuration file into a validated [`ExperimentConfig`],
/// applying the documented defaults to missing keys (`T=2000`, `warmup=10`,
/// `seeds=200`, `base_seed=0`, `delta=0.05`, `lambda=1`, `L=1`, `alpha0=1`,
/// `c=auto`, `system=scalar`, `agents=rbmle,ofu,ts`, `out_dir=out`).
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key_part, value_part)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let key = key_part.trim();
        let value = value_part.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_owned(),
            });
        }
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_owned(),
            });
        }
        seen.push(key.to_owned());
        let invalid = |message: String| ConfigError::InvalidValue {
            line,
            key: key.to_owned(),
            message,
        };
        if value.is_empty() {
            return Err(invalid("value is empty".to_owned()));
        }
        match key {
            "system" => cfg.system = SystemSpec::Registry(value.to_owned()),
            "agents" => {
                let mut agents = Vec::new();
                for token in value.split(',') {
                    let agent = AgentSelector::from_str(token).map_err(|e| match e {
                        HarnessError::InvalidConfig(msg) => invalid(msg),
                        other => invalid(other.to_string()),
                    })?;
                    agents.push(agent);
                }
                cfg.agents = agents;
            }
            "T" => cfg.horizon = parse_scalar(value, invalid)?,
            "warmup" => cfg.warmup = parse_scalar(value, invalid)?,
            "seeds" => cfg.seeds = parse_scalar(value, invalid)?,
            "base_seed" => cfg.base_seed = parse_scalar(value, invalid)?,
            "delta" => cfg.delta = parse_scalar(value, invalid)?,
            "lambda" => cfg.lambda = parse_scalar(value, invalid)?,
            "L" => cfg.noise_bound = parse_scalar(value, invalid)?,
            "c" => {
                cfg.norm_bound = if value == "auto" {
                    None
                } else {
                    Some(parse_scalar(value, invalid)?)
                };
            }
            "alpha0" => {
                let mut alphas = Vec::new();
                for token in value.split(',') {
                    alphas.push(parse_scalar(token.trim(), &invalid)?);
                }
                cfg.alpha0 = alphas;
            }
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            _ => unreachable!("key membership checked above"),
        }
    }
    cfg.validate().map_err(|e| match e {
        HarnessError::InvalidConfig(msg) => ConfigError::Invalid(msg),
        other => ConfigError::Invalid(other.to_string()),
    })?;
    Ok(cfg)
}

fn parse_scalar<T: FromStr>(
    value: &str,
    invalid: impl Fn(String) -> ConfigError,
) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| invalid(format!("`{value}` ({e})")))
}

/// Renders a configuration back to the text format, one key per line, with
/// floats at full 17-digit precision so `parse_config(render_config(cfg))`
/// reproduces `cfg` exactly.
///
/// Only registry systems are representable in the text format; inline
/// matrices render as their registry placeholder and should not be
/// round-tripped through text.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let system = match &cfg.system {
        SystemSpec::Registry(key) => key.clone(),
        SystemSpec::Inline { .. } => "scalar".to_owned(),
    };
    let agents = cfg
        .agents
        .iter()
        .map(|a| a.label())
        .collect::<Vec<_>>()
        .join(", ");
    let alpha0 = cfg
        .alpha0
        .iter()
        .map(|a| format_value(*a))
        .collect::<Vec<_>>()
        .join(", ");
    let c = match cfg.norm_bound {
        None => "auto".to_owned(),
        Some(v) => format_value(v),
    };
    format!(
        "system = {system}\n\
         agents = {agents}\n\
         T = {}\n\
         warmup = {}\n\
         seeds = {}\n\
         base_seed = {}\n\
         delta = {}\n\
         lambda = {}\n\
         L = {}\n\
         c = {c}\n\
         alpha0 = {alpha0}\n\
         out_dir = {}\n",
        cfg.horizon,
        cfg.warmup,
        cfg.seeds,
        cfg.base_seed,
        format_value(cfg.delta),
        format_value(cfg.lambda),
        format_value(cfg.noise_bound),
        cfg.out_dir.display(),
    )
}

//! Experiment config files: a single JSON object that round-trips
//! exactly, with strict rejection of unknown keys.

use std::path::{Path, PathBuf};

use mfrisk::model::{HetModelParams, ModelParams};
use mfrisk::simulate::InitialCondition;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Initial condition named in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum InitialChoice {
    /// Every agent at -1.
    MinusOne,
    /// Every agent at the negative equilibrium -xi_b.
    MinusXib,
}

impl InitialChoice {
    pub fn to_condition(self) -> InitialCondition {
        match self {
            InitialChoice::MinusOne => InitialCondition::AllAt(-1.0),
            InitialChoice::MinusXib => InitialCondition::NegativeEquilibrium,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InitialChoice::MinusOne => "minus-one",
            InitialChoice::MinusXib => "minus-xib",
        }
    }
}

/// One sweep axis: a parameter name and the values to visit in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Everything a run can be configured with. All fields optional so one
/// file can serve several subcommands; each command checks for what it
/// needs and reports a config error when it is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub het: Option<HetModelParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
}

impl ExperimentConfig {
    /// Reads and parses a config file. Read failures are I/O errors,
    /// parse failures are config errors.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))
    }

    /// The homogeneous parameter set, or a config error naming what is
    /// missing.
    pub fn require_params(&self) -> CliResult<ModelParams> {
        self.params
            .clone()
            .ok_or_else(|| CliError::Config("config needs a \"params\" object".to_string()))
    }

    /// The heterogeneous parameter set, or a config error.
    pub fn require_het(&self) -> CliResult<HetModelParams> {
        self.het
            .clone()
            .ok_or_else(|| CliError::Config("config needs a \"het\" object".to_string()))
    }
}

/// Applies one swept value to a copy of the base parameters.
pub fn apply_sweep_value(base: &ModelParams, parameter: &str, value: f64) -> CliResult<ModelParams> {
    let mut p = base.clone();
    match parameter {
        "h" => p.h = value,
        "theta" => p.theta = value,
        "sigma" => p.sigma = value,
        "horizon" => p.horizon = value,
        "dt" => p.dt = value,
        "n_agents" => {
            if !(value.is_finite() && value >= 1.0 && value.fract() == 0.0) {
                return Err(CliError::Config(format!(
                    "n_agents sweep values must be positive integers (got {value})"
                )));
            }
            p.n_agents = value as usize;
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter {other:?}; expected one of h, theta, sigma, horizon, dt, n_agents"
            )))
        }
    }
    Ok(p)
}

/// Parses a comma-separated list of floats from a flag value.
pub fn parse_float_list(flag: &str, text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(CliError::Usage(format!(
                "{flag} has an empty entry in {text:?}"
            )));
        }
        let v: f64 = piece.parse().map_err(|_| {
            CliError::Usage(format!("{flag} entry {piece:?} is not a number"))
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{flag} needs at least one value")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfrisk::model::GroupSpec;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            params: Some(ModelParams {
                h: 0.1,
                theta: 10.0,
                sigma: 1.0,
                n_agents: 20,
                horizon: 50.0,
                dt: 0.02,
            }),
            het: Some(HetModelParams {
                h: 0.1,
                sigma: 0.5,
                n_agents: 20,
                horizon: 50.0,
                dt: 0.02,
                groups: GroupSpec::new(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap(),
            }),
            seed: Some(42),
            replicas: Some(200),
            initial: Some(InitialChoice::MinusXib),
            out: Some(PathBuf::from("runs/out.json")),
            sweep: Some(SweepAxis {
                parameter: "sigma".to_string(),
                values: vec![2.0, 2.6, 3.2],
            }),
        }
    }

    #[test]
    fn config_round_trips_identically() {
        let cfg = sample();
        let first = serde_json::to_value(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_value(first.clone()).unwrap();
        assert_eq!(back, cfg);
        let second = serde_json::to_value(&back).unwrap();
        assert_eq!(first, second, "serialization must be idempotent");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"seed": 1, "surprise": true}"#;
        let err = serde_json::from_str::<ExperimentConfig>(text).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn absent_fields_are_omitted_when_serialized() {
        let cfg = ExperimentConfig {
            seed: Some(7),
            ..Default::default()
        };
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v, serde_json::json!({"seed": 7}));
    }

    #[test]
    fn sweep_values_apply_to_named_fields() {
        let base = sample().params.unwrap();
        let p = apply_sweep_value(&base, "sigma", 3.0).unwrap();
        assert_eq!(p.sigma, 3.0);
        assert_eq!(p.theta, base.theta);
        let p = apply_sweep_value(&base, "n_agents", 40.0).unwrap();
        assert_eq!(p.n_agents, 40);
        assert!(apply_sweep_value(&base, "n_agents", 2.5).is_err());
        assert!(apply_sweep_value(&base, "volatility", 1.0).is_err());
    }

    #[test]
    fn float_lists_parse_and_report_bad_entries() {
        assert_eq!(
            parse_float_list("--t-grid", "0, 1.5 ,3").unwrap(),
            vec![0.0, 1.5, 3.0]
        );
        assert!(parse_float_list("--t-grid", "0,,1").is_err());
        assert!(parse_float_list("--t-grid", "0,abc").is_err());
    }
}

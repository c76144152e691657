//! Experiment configuration files.
//!
//! A config is a single JSON document whose `experiment` field names the
//! command it drives; the rest of the schema is validated strictly
//! (unknown fields are rejected) before any compute starts. All randomness
//! is seeded from the config.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dbvar_core::bounds::BoundInputs;
use dbvar_core::nn::{Activation, MlpSpec};
use dbvar_core::train::TrainConfig;
use dbvar_core::GeneratingDistribution;

use crate::CliError;

/// Training-set source: distribution, size, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub distribution: GeneratingDistribution,
    pub train_points: usize,
    pub train_seed: u64,
}

/// Fresh evaluation/test draws from the same distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    pub eval_points: usize,
    pub eval_seed: u64,
    pub test_points: usize,
    pub test_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl ModelBlock {
    pub fn to_spec(&self) -> Result<MlpSpec, CliError> {
        MlpSpec::new(self.layer_widths.clone(), self.activation)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainExperiment {
    pub experiment: String,
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvExperiment {
    pub experiment: String,
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
    pub eval: EvalBlock,
    /// Tie tolerance for the Assumption-1 tie-mass diagnostic (the main
    /// estimates always use the training τ).
    #[serde(default = "default_diagnostic_tau")]
    pub diagnostic_tau: f64,
}

fn default_diagnostic_tau() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveExperiment {
    pub experiment: String,
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
    pub eval: EvalBlock,
    pub etas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub epsilons: Vec<f64>,
    pub etas: Vec<f64>,
    pub ms: Vec<u64>,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsExperiment {
    pub experiment: String,
    pub inputs: BoundInputs,
    /// Optional sweep grid emitted as CSV next to the single report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    /// Measured algorithm DB variability, for the lower bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub av: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolEntry {
    pub id: String,
    pub layer_widths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectExperiment {
    pub experiment: String,
    pub data: DataBlock,
    pub pool: Vec<PoolEntry>,
    /// Shared training configuration for every candidate.
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    pub n_repeats: usize,
    pub eval: EvalBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingTimeExperiment {
    pub experiment: String,
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
    pub eval: EvalBlock,
    pub checkpoint_epochs: Vec<usize>,
    /// Learning rates to sweep; defaults to the one in `train`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learning_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSizeExperiment {
    pub experiment: String,
    /// The parent sample; sizes are nested prefixes of it.
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
    pub eval: EvalBlock,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelNoiseExperiment {
    pub experiment: String,
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
    pub eval: EvalBlock,
    pub checkpoint_epochs: Vec<usize>,
    pub noise_ratio: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaEpsExperiment {
    pub experiment: String,
    /// Parent sample of size `max(m_values)`; each m is a nested prefix.
    pub data: DataBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub n_repeats: usize,
    pub eval: EvalBlock,
    pub etas: Vec<f64>,
    pub m_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyExperiment {
    pub experiment: String,
}

impl Default for VerifyExperiment {
    fn default() -> Self {
        VerifyExperiment {
            experiment: "verify".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Train(TrainExperiment),
    Av(AvExperiment),
    Curve(CurveExperiment),
    Bounds(BoundsExperiment),
    Select(SelectExperiment),
    TrainingTime(TrainingTimeExperiment),
    SampleSize(SampleSizeExperiment),
    LabelNoise(LabelNoiseExperiment),
    EtaEps(EtaEpsExperiment),
    Verify(VerifyExperiment),
}

impl ExperimentConfig {
    pub fn experiment_name(&self) -> &'static str {
        match self {
            ExperimentConfig::Train(_) => "train",
            ExperimentConfig::Av(_) => "av",
            ExperimentConfig::Curve(_) => "curve",
            ExperimentConfig::Bounds(_) => "bounds",
            ExperimentConfig::Select(_) => "select",
            ExperimentConfig::TrainingTime(_) => "training-time",
            ExperimentConfig::SampleSize(_) => "sample-size",
            ExperimentConfig::LabelNoise(_) => "label-noise",
            ExperimentConfig::EtaEps(_) => "eta-eps",
            ExperimentConfig::Verify(_) => "verify",
        }
    }

    /// Fingerprint of the canonical (parsed, re-serialized) config.
    pub fn fingerprint(&self) -> String {
        let canon = match self {
            ExperimentConfig::Train(c) => serde_json::to_string(c),
            ExperimentConfig::Av(c) => serde_json::to_string(c),
            ExperimentConfig::Curve(c) => serde_json::to_string(c),
            ExperimentConfig::Bounds(c) => serde_json::to_string(c),
            ExperimentConfig::Select(c) => serde_json::to_string(c),
            ExperimentConfig::TrainingTime(c) => serde_json::to_string(c),
            ExperimentConfig::SampleSize(c) => serde_json::to_string(c),
            ExperimentConfig::LabelNoise(c) => serde_json::to_string(c),
            ExperimentConfig::EtaEps(c) => serde_json::to_string(c),
            ExperimentConfig::Verify(c) => serde_json::to_string(c),
        }
        .expect("config serializes");
        dbvar_core::fingerprint::sha256_hex(canon.as_bytes())
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

/// Parses and validates a config file; the schema is selected by the
/// `experiment` field.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let body = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&body).map_err(config_err)?;
    let name = raw
        .get("experiment")
        .and_then(|v| v.as_str())
        .ok_or_else(|| CliError::Config("config is missing the \"experiment\" field".into()))?
        .to_string();
    let parsed = match name.as_str() {
        "train" => ExperimentConfig::Train(serde_json::from_value(raw).map_err(config_err)?),
        "av" => ExperimentConfig::Av(serde_json::from_value(raw).map_err(config_err)?),
        "curve" => ExperimentConfig::Curve(serde_json::from_value(raw).map_err(config_err)?),
        "bounds" => ExperimentConfig::Bounds(serde_json::from_value(raw).map_err(config_err)?),
        "select" => ExperimentConfig::Select(serde_json::from_value(raw).map_err(config_err)?),
        "training-time" => {
            ExperimentConfig::TrainingTime(serde_json::from_value(raw).map_err(config_err)?)
        }
        "sample-size" => {
            ExperimentConfig::SampleSize(serde_json::from_value(raw).map_err(config_err)?)
        }
        "label-noise" => {
            ExperimentConfig::LabelNoise(serde_json::from_value(raw).map_err(config_err)?)
        }
        "eta-eps" => ExperimentConfig::EtaEps(serde_json::from_value(raw).map_err(config_err)?),
        "verify" => ExperimentConfig::Verify(serde_json::from_value(raw).map_err(config_err)?),
        other => {
            return Err(CliError::Config(format!(
                "unknown experiment \"{other}\" (expected one of train, av, curve, bounds, \
                 select, training-time, sample-size, label-noise, eta-eps, verify)"
            )))
        }
    };
    validate(&parsed)?;
    Ok(parsed)
}

fn validate(config: &ExperimentConfig) -> Result<(), CliError> {
    let check_dist = |d: &GeneratingDistribution| d.validate().map_err(config_err);
    let check_train = |t: &TrainConfig| t.validate().map_err(config_err);
    let check_repeats = |n: usize| {
        if n < 1 {
            Err(CliError::Config("n_repeats must be >= 1".into()))
        } else {
            Ok(())
        }
    };
    match config {
        ExperimentConfig::Train(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
        }
        ExperimentConfig::Av(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
        }
        ExperimentConfig::Curve(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
            if c.etas.is_empty() || c.etas.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config(
                    "etas must be nonempty and strictly increasing".into(),
                ));
            }
        }
        ExperimentConfig::Bounds(c) => {
            c.inputs.validate().map_err(config_err)?;
        }
        ExperimentConfig::Select(c) => {
            check_dist(&c.data.distribution)?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
            if c.pool.len() < 3 {
                return Err(CliError::Config("pool needs >= 3 candidates".into()));
            }
        }
        ExperimentConfig::TrainingTime(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
            if c.checkpoint_epochs.is_empty() {
                return Err(CliError::Config("checkpoint_epochs must be listed".into()));
            }
        }
        ExperimentConfig::SampleSize(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
            if c.sizes.is_empty() || c.sizes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config(
                    "sizes must be nonempty and strictly increasing".into(),
                ));
            }
            if *c.sizes.last().unwrap() > c.data.train_points {
                return Err(CliError::Config(
                    "sizes exceed the parent sample (data.train_points)".into(),
                ));
            }
        }
        ExperimentConfig::LabelNoise(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
            if !(0.0..=1.0).contains(&c.noise_ratio) {
                return Err(CliError::Config("noise_ratio must be in [0,1]".into()));
            }
            if c.checkpoint_epochs.is_empty() {
                return Err(CliError::Config("checkpoint_epochs must be listed".into()));
            }
        }
        ExperimentConfig::EtaEps(c) => {
            check_dist(&c.data.distribution)?;
            c.model.to_spec()?;
            check_train(&c.train)?;
            check_repeats(c.n_repeats)?;
            if c.etas.is_empty() || c.etas.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config(
                    "etas must be nonempty and strictly increasing".into(),
                ));
            }
            if c.m_values.is_empty() || c.m_values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Config(
                    "m_values must be nonempty and strictly increasing".into(),
                ));
            }
            if *c.m_values.last().unwrap() > c.data.train_points {
                return Err(CliError::Config(
                    "m_values exceed the parent sample (data.train_points)".into(),
                ));
            }
        }
        ExperimentConfig::Verify(_) => {}
    }
    Ok(())
}

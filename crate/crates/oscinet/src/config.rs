//! Run configuration: TOML parsing, validation, canonical emission.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{DeepOnetSpec, MlpSpec, ScaleSet};
use crate::tensor::Activation;
use crate::train::{LossKind, TrainConfig};

/// Model section: architecture in plain lists, converted to a validated
/// [`DeepOnetSpec`] on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Branch widths, first entry = sensor count, last = basis_dim + 1.
    pub branch_widths: Vec<usize>,
    /// Trunk sub-network widths, first entry must be 1.
    pub trunk_widths: Vec<usize>,
    #[serde(default = "default_branch_activation")]
    pub branch_activation: Activation,
    #[serde(default = "default_trunk_activation")]
    pub trunk_activation: Activation,
    /// Branch input scales; default is the single unit scale.
    #[serde(default = "default_branch_scales")]
    pub branch_scales: Vec<f64>,
    /// Trunk coordinate scales; default is the single unit scale.
    #[serde(default = "default_trunk_scales")]
    pub trunk_scales: Vec<f64>,
    #[serde(default)]
    pub complex: bool,
    #[serde(default = "default_true")]
    pub branch_final_bias: bool,
    #[serde(default = "default_true")]
    pub trunk_input_bias: bool,
}

fn default_branch_activation() -> Activation {
    Activation::Tanh
}

fn default_trunk_activation() -> Activation {
    Activation::Sin
}

fn default_branch_scales() -> Vec<f64> {
    vec![1.0]
}

fn default_trunk_scales() -> Vec<f64> {
    vec![1.0]
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Build and validate the architecture this section describes.
    pub fn to_spec(&self) -> Result<DeepOnetSpec> {
        let trunk_scales = ScaleSet::new(self.trunk_scales.clone())?;
        let branch_scales = ScaleSet::new(self.branch_scales.clone())?;
        let n_t = *self
            .trunk_widths
            .last()
            .ok_or_else(|| Error::validation("model.trunk_widths", "must not be empty"))?;
        let mut branch = MlpSpec::new(self.branch_widths.clone(), self.branch_activation);
        branch.final_bias = self.branch_final_bias;
        let mut trunk = MlpSpec::new(self.trunk_widths.clone(), self.trunk_activation);
        trunk.input_bias = self.trunk_input_bias;
        let spec = DeepOnetSpec {
            branch,
            trunk,
            branch_scales,
            trunk_scales,
            n_t,
            complex_output: self.complex,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Training section with the reference defaults (lr 1e-4, 1500 epochs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainSection {
    #[serde(default = "default_lr")]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub loss: Option<LossKind>,
    #[serde(default)]
    pub shuffle: Option<bool>,
}

fn default_lr() -> Option<f64> {
    None
}

impl TrainSection {
    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let defaults = TrainConfig::default();
        let config = TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            seed: self.seed.unwrap_or(defaults.seed),
            eval_every: self.eval_every.unwrap_or(defaults.eval_every),
            loss: self.loss.unwrap_or(defaults.loss),
            shuffle: self.shuffle.unwrap_or(defaults.shuffle),
        };
        config.validate()?;
        Ok(config)
    }
}

/// A full run configuration as parsed from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Dataset directory to train on.
    pub dataset: String,
    /// Output directory for run artifacts.
    #[serde(default = "default_output")]
    pub output: String,
    /// Reject unknown keys and escalate warnings.
    #[serde(default)]
    pub strict: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
}

fn default_output() -> String {
    "runs/out".into()
}

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "" => &["dataset", "output", "strict", "model", "train"],
        "model" => &[
            "branch_widths",
            "trunk_widths",
            "branch_activation",
            "trunk_activation",
            "branch_scales",
            "trunk_scales",
            "complex",
            "branch_final_bias",
            "trunk_input_bias",
        ],
        "train" => &[
            "learning_rate",
            "epochs",
            "batch_size",
            "seed",
            "eval_every",
            "loss",
            "shuffle",
        ],
        _ => &[],
    }
}

fn reject_unknown_keys(value: &toml::Value) -> Result<()> {
    let table = value
        .as_table()
        .ok_or_else(|| Error::Parse("top level must be a table".into()))?;
    for (section, keys) in [("", known_keys("")), ("model", known_keys("model")), ("train", known_keys("train"))]
    {
        let sub = if section.is_empty() {
            Some(table)
        } else {
            table.get(section).and_then(|v| v.as_table())
        };
        if let Some(sub) = sub {
            for key in sub.keys() {
                if !keys.contains(&key.as_str()) {
                    let path = if section.is_empty() {
                        key.clone()
                    } else {
                        format!("{section}.{key}")
                    };
                    return Err(Error::validation(
                        path,
                        "unknown key (strict mode rejects unrecognized keys)",
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Parse a TOML run configuration.
///
/// Defaults are applied for every omitted training field. When the document
/// sets `strict = true`, unknown keys anywhere in the file are rejected.
/// The model section is validated structurally; referenced paths are checked
/// at run time, not here.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: toml::Value =
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
    let strict = value
        .get("strict")
        .and_then(|v| v.as_bool())
        .unwrap_or(false);
    if strict {
        reject_unknown_keys(&value)?;
    }
    let config: RunConfig = value
        .try_into()
        .map_err(|e| Error::Parse(format!("config: {e}")))?;
    config.model.to_spec()?;
    config.train.to_train_config()?;
    Ok(config)
}

/// Canonical TOML emission; `parse_config(to_canonical_toml(c))` equals `c`.
pub fn to_canonical_toml(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Parse(format!("config serialization: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset = "data/demo"

[model]
branch_widths = [8, 16, 9]
trunk_widths = [1, 12, 4]
trunk_scales = [1.0, 2.0]
"#;

    #[test]
    fn minimal_config_gets_reference_defaults() {
        let config = parse_config(MINIMAL).unwrap();
        let train = config.train.to_train_config().unwrap();
        assert_eq!(train.learning_rate, 1e-4);
        assert_eq!(train.epochs, 1500);
        assert_eq!(train.batch_size, 100);
        assert_eq!(train.eval_every, 10);
        assert!(train.shuffle);
        let spec = config.model.to_spec().unwrap();
        assert_eq!(spec.basis_dim(), 8);
        assert_eq!(spec.branch.activation, Activation::Tanh);
        assert_eq!(spec.trunk.activation, Activation::Sin);
    }

    #[test]
    fn unknown_key_rejected_only_in_strict_mode() {
        // root-level keys must come before the [model] table
        let with_unknown = format!("whatever = 3\n{MINIMAL}");
        assert!(parse_config(&with_unknown).is_ok());
        let strict = format!("strict = true\nwhatever = 3\n{MINIMAL}");
        match parse_config(&strict) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "whatever"),
            other => panic!("expected validation error, got {other:?}"),
        }
        let strict_nested = format!(
            "strict = true\n{}",
            MINIMAL.replace("[model]", "[model]\nmystery = 1")
        );
        assert!(matches!(
            parse_config(&strict_nested),
            Err(Error::Validation { field, .. }) if field == "model.mystery"
        ));
    }

    #[test]
    fn canonical_roundtrip() {
        let config = parse_config(MINIMAL).unwrap();
        let text = to_canonical_toml(&config).unwrap();
        let reparsed = parse_config(&text).unwrap();
        assert_eq!(config, reparsed);
        // and emission is stable
        assert_eq!(text, to_canonical_toml(&reparsed).unwrap());
    }

    #[test]
    fn parse_error_carries_line_info() {
        let err = parse_config("dataset = [unclosed").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn invalid_architecture_rejected_at_parse() {
        let bad = MINIMAL.replace("[8, 16, 9]", "[8, 16, 7]");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn invalid_training_field_names_itself() {
        let bad = format!("{MINIMAL}\n[train]\nlearning_rate = -1.0\n");
        match parse_config(&bad) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "learning_rate"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}

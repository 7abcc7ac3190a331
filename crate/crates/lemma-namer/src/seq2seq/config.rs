//! Model and training configuration, including the compositional model
//! naming scheme used on the command line (`ln-s+bsexpl1+attn+copy`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::InputKind;
use crate::nnet::AttentionScoring;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub inputs: Vec<InputKind>,
    pub embedding_dim: usize,
    pub hidden_units: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub use_attention: bool,
    pub use_copy: bool,
    pub beam_size: usize,
    pub max_decode_len: usize,
    /// Input streams longer than this are truncated with a warning.
    pub max_input_len: usize,
    pub attention_scoring: AttentionScoring,
    /// Length-normalize beam scores. Off by default.
    pub length_normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            inputs: vec![InputKind::Stmt],
            embedding_dim: 200,
            hidden_units: 200,
            num_layers: 1,
            dropout: 0.5,
            use_attention: false,
            use_copy: false,
            beam_size: 5,
            max_decode_len: 64,
            max_input_len: 1500,
            attention_scoring: AttentionScoring::Bilinear,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid model component {0:?}")]
    UnknownComponent(String),
    #[error("model must have at least one input")]
    NoInputs,
    #[error("copy mechanism requires attention")]
    CopyWithoutAttention,
    #[error("duplicate input component {0:?}")]
    DuplicateInput(String),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.inputs.is_empty() {
            return Err(ConfigError::NoInputs);
        }
        if self.use_copy && !self.use_attention {
            return Err(ConfigError::CopyWithoutAttention);
        }
        Ok(())
    }

    /// Parse a compositional model name. Components: `s` (statement tokens),
    /// `fsexpl0` / `fsexpl1` (raw / trimmed parse tree), `bsexpl0` /
    /// `bsexpl1` (raw / trimmed kernel tree), `attn`, `copy`. An `ln-`
    /// prefix is accepted and ignored.
    pub fn parse_model_name(name: &str) -> Result<ModelConfig, ConfigError> {
        let spec = name.strip_prefix("ln-").unwrap_or(name);
        let mut config = ModelConfig { inputs: Vec::new(), ..ModelConfig::default() };
        for part in spec.split('+') {
            let kind = match part {
                "s" => Some(InputKind::Stmt),
                "fsexpl0" => Some(InputKind::STree),
                "fsexpl1" => Some(InputKind::TrimmedSTree),
                "bsexpl0" => Some(InputKind::KTree),
                "bsexpl1" => Some(InputKind::TrimmedKTree),
                "attn" => {
                    config.use_attention = true;
                    None
                }
                "copy" => {
                    config.use_copy = true;
                    None
                }
                other => return Err(ConfigError::UnknownComponent(other.to_string())),
            };
            if let Some(kind) = kind {
                if config.inputs.contains(&kind) {
                    return Err(ConfigError::DuplicateInput(part.to_string()));
                }
                config.inputs.push(kind);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn model_name(&self) -> String {
        let mut parts: Vec<&str> = self
            .inputs
            .iter()
            .map(|k| match k {
                InputKind::Stmt => "s",
                InputKind::STree => "fsexpl0",
                InputKind::TrimmedSTree => "fsexpl1",
                InputKind::KTree => "bsexpl0",
                InputKind::TrimmedKTree => "bsexpl1",
            })
            .collect();
        if self.use_attention {
            parts.push("attn");
        }
        if self.use_copy {
            parts.push("copy");
        }
        format!("ln-{}", parts.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub checkpoint_interval: usize,
    pub early_stop_patience: usize,
    pub max_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            checkpoint_interval: 200,
            early_stop_patience: 3,
            max_steps: 10_000,
            batch_size: 32,
            seed: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_compositional_name() {
        let config = ModelConfig::parse_model_name("ln-s+bsexpl1+attn+copy").unwrap();
        assert_eq!(config.inputs, vec![InputKind::Stmt, InputKind::TrimmedKTree]);
        assert!(config.use_attention);
        assert!(config.use_copy);
        assert_eq!(config.model_name(), "ln-s+bsexpl1+attn+copy");
    }

    #[test]
    fn rejects_bad_combinations() {
        assert_eq!(
            ModelConfig::parse_model_name("s+wat"),
            Err(ConfigError::UnknownComponent("wat".into()))
        );
        assert_eq!(
            ModelConfig::parse_model_name("attn"),
            Err(ConfigError::NoInputs)
        );
        assert_eq!(
            ModelConfig::parse_model_name("s+copy"),
            Err(ConfigError::CopyWithoutAttention)
        );
        assert_eq!(
            ModelConfig::parse_model_name("s+s"),
            Err(ConfigError::DuplicateInput("s".into()))
        );
    }

    #[test]
    fn defaults_follow_the_training_recipe() {
        let t = TrainConfig::default();
        assert_eq!(t.learning_rate, 0.001);
        assert_eq!(t.checkpoint_interval, 200);
        assert_eq!(t.early_stop_patience, 3);
        let m = ModelConfig::default();
        assert_eq!(m.beam_size, 5);
        assert_eq!(m.dropout, 0.5);
    }
}

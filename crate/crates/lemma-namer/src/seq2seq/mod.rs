//! Encoder-decoder naming models: configuration, model assembly, training,
//! beam-search decoding, and checkpointing.

pub mod beam;
pub mod checkpoint;
pub mod config;
pub mod model;
pub mod train;

pub use beam::{suggest, Suggestion};
pub use checkpoint::{load_from_path, save_to_path, CheckpointError};
pub use config::{ConfigError, ModelConfig, TrainConfig};
pub use model::{prepare_example, Example, ModelError, Seq2SeqModel};
pub use train::{evaluate_loss, train, Adam, EarlyStopping, TrainLogEntry, TrainOutcome};

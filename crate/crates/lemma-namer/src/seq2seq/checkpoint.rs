//! Checkpoint format: one JSON header line (format version, model config,
//! vocabularies, seed, parameter names and shapes) followed by all parameter
//! values as little-endian f32 in header order. Same-seed runs produce
//! byte-identical files.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocab;
use crate::nnet::{ParamSet, Tensor};

use super::config::ModelConfig;
use super::model::{ModelError, Seq2SeqModel};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint payload has {got} values, header declares {want}")]
    PayloadSize { got: usize, want: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    model_name: String,
    config: ModelConfig,
    name_vocab: Vocab,
    input_vocab: Vocab,
    init_seed: u64,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

pub fn save(model: &Seq2SeqModel, mut out: impl Write) -> Result<(), CheckpointError> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        model_name: model.config.model_name(),
        config: model.config.clone(),
        name_vocab: model.name_vocab.clone(),
        input_vocab: model.input_vocab.clone(),
        init_seed: model.init_seed,
        params: model
            .params
            .iter()
            .map(|(name, t)| ParamEntry { name: name.to_string(), shape: t.shape.clone() })
            .collect(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (_, tensor) in model.params.iter() {
        for &v in &tensor.data {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_to_path(model: &Seq2SeqModel, path: &Path) -> Result<(), CheckpointError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    save(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(reader: impl Read) -> Result<Seq2SeqModel, CheckpointError> {
    let mut reader = BufReader::new(reader);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let mut header: Header = serde_json::from_str(header_line.trim_end())?;
    if header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    header.name_vocab.reindex();
    header.input_vocab.reindex();

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let want: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if payload.len() != want * 4 {
        return Err(CheckpointError::PayloadSize { got: payload.len() / 4, want });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);

    let mut params = ParamSet::new();
    for entry in &header.params {
        let mut tensor = Tensor::zeros(entry.shape.clone());
        for v in tensor.data.iter_mut() {
            *v = values.next().expect("size checked above");
        }
        params.register(&entry.name, tensor);
    }
    Ok(Seq2SeqModel::from_params(
        header.config,
        header.name_vocab,
        header.input_vocab,
        params,
        header.init_seed,
    )?)
}

pub fn load_from_path(path: &Path) -> Result<Seq2SeqModel, CheckpointError> {
    load(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::model::Example;
    use crate::nnet::Tape;

    fn model() -> Seq2SeqModel {
        let name_vocab = Vocab::from_tokens(["a", "b", "_"].map(String::from));
        let input_vocab = Vocab::from_tokens(["x", "y"].map(String::from));
        let config = ModelConfig {
            embedding_dim: 6,
            hidden_units: 5,
            use_attention: true,
            use_copy: true,
            ..ModelConfig::default()
        };
        Seq2SeqModel::new(config, name_vocab, input_vocab, 11)
    }

    #[test]
    fn round_trip_preserves_behavior() {
        let m = model();
        let mut bytes = Vec::new();
        save(&m, &mut bytes).unwrap();
        let loaded = load(&bytes[..]).unwrap();
        assert_eq!(loaded.config, m.config);
        assert_eq!(loaded.name_vocab, m.name_vocab);
        assert_eq!(loaded.input_vocab, m.input_vocab);
        assert_eq!(loaded.init_seed, m.init_seed);

        let ex = Example {
            qname: "T.t".into(),
            name: "a_b".into(),
            name_subtokens: vec!["a".into(), "_".into(), "b".into()],
            inputs: vec![vec!["x".into(), "oov".into()]],
        };
        let mut t1 = Tape::new(&m.params);
        let l1 = m.forward_loss(&mut t1, &ex, None).unwrap();
        let mut t2 = Tape::new(&loaded.params);
        let l2 = loaded.forward_loss(&mut t2, &ex, None).unwrap();
        // Values survive an f64 -> f32 -> f64 round trip, so losses agree to
        // single precision.
        assert!((t1.scalar(l1) - t2.scalar(l2)).abs() < 1e-5);
    }

    #[test]
    fn save_is_byte_deterministic() {
        let mut a = Vec::new();
        save(&model(), &mut a).unwrap();
        let mut b = Vec::new();
        save(&model(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = Vec::new();
        save(&model(), &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(
            load(&bytes[..]),
            Err(CheckpointError::PayloadSize { .. })
        ));
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let m = model();
        let mut bytes = Vec::new();
        save(&m, &mut bytes).unwrap();
        // Corrupt the header: claim no attention while keeping attention
        // parameters in the payload.
        let split = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(bytes[..split].to_vec()).unwrap();
        let patched = header.replace("\"use_attention\":true", "\"use_attention\":false");
        let mut corrupted = patched.into_bytes();
        corrupted.push(b'\n');
        corrupted.extend_from_slice(&bytes[split + 1..]);
        assert!(matches!(
            load(&corrupted[..]),
            Err(CheckpointError::Model(ModelError::ConfigMismatch(_)))
        ));
    }
}

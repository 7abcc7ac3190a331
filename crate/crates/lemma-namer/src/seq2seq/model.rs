//! Multi-input encoder-decoder assembly: one bi-LSTM encoder per configured
//! input view, state fusion into the decoder's initial state, an LSTM
//! decoder, and optional attention and pointer-generator copy layers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{LemmaRecord, Vocab, BOS, EOS, UNK};
use crate::nnet::{
    dropout_mask, Affine, Attention, BiLstmEncoder, CopyGate, Fusion, LstmCell, NodeId, ParamSet,
    Tape,
};
use crate::subtok::Lexicon;
use crate::tree::TrimConfig;

use super::config::ModelConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("reference name needs {needed} decode steps but max_decode_len is {max}")]
    ReferenceTooLong { needed: usize, max: usize },
    #[error("checkpoint/config mismatch: {0}")]
    ConfigMismatch(String),
}

/// A record reduced to the model's configured input token streams plus the
/// reference name sub-tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub qname: String,
    pub name: String,
    pub name_subtokens: Vec<String>,
    pub inputs: Vec<Vec<String>>,
}

pub fn prepare_example(
    record: &LemmaRecord,
    config: &ModelConfig,
    lexicon: &Lexicon,
    trim_config: &TrimConfig,
) -> Example {
    let inputs = config
        .inputs
        .iter()
        .map(|&kind| {
            let mut seq = crate::corpus::input_sequence(record, kind, lexicon, trim_config);
            if seq.len() > config.max_input_len {
                eprintln!(
                    "warning: truncating {} input of {} from {} to {} tokens",
                    config.model_name(),
                    record.qualified_name,
                    seq.len(),
                    config.max_input_len
                );
                seq.truncate(config.max_input_len);
            }
            seq
        })
        .collect();
    Example {
        qname: record.qualified_name.clone(),
        name: record.name.clone(),
        name_subtokens: crate::corpus::name_subtokens(record, lexicon),
        inputs,
    }
}

#[derive(Debug, Clone)]
pub struct Architecture {
    pub emb_in: usize,
    pub emb_out: usize,
    pub encoders: Vec<BiLstmEncoder>,
    pub fusion: Fusion,
    pub decoder: Vec<LstmCell>,
    pub attention: Option<Attention>,
    pub copy_gate: Option<CopyGate>,
    pub out_proj: Affine,
}

fn build_architecture(
    config: &ModelConfig,
    input_vocab_size: usize,
    name_vocab_size: usize,
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
) -> Architecture {
    let e = config.embedding_dim;
    let h = config.hidden_units;
    let emb_in = params.register_uniform("emb_in", vec![input_vocab_size, e], rng);
    let emb_out = params.register_uniform("emb_out", vec![name_vocab_size, e], rng);
    let encoders = config
        .inputs
        .iter()
        .enumerate()
        .map(|(i, _)| {
            BiLstmEncoder::register(params, &format!("enc{i}"), e, h, config.num_layers, rng)
        })
        .collect::<Vec<_>>();
    // Decoder hidden size equals the encoder hidden units; the fusion layer
    // maps the concatenation of all encoder finals down to it.
    let fusion = Fusion::register(params, "fusion", 2 * h * encoders.len(), h, rng);
    let decoder = (0..config.num_layers)
        .map(|l| {
            let in_dim = if l == 0 { e } else { h };
            LstmCell::register(params, &format!("dec.l{l}"), in_dim, h, rng)
        })
        .collect();
    let attention = config.use_attention.then(|| {
        Attention::register(params, "attn", h, 2 * h, config.attention_scoring, rng)
    });
    let copy_gate = config
        .use_copy
        .then(|| CopyGate::register(params, "copy", 2 * h, h, e, rng));
    let out_proj = Affine::register(params, "out", h, name_vocab_size, rng);
    Architecture { emb_in, emb_out, encoders, fusion, decoder, attention, copy_gate, out_proj }
}

pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub name_vocab: Vocab,
    pub input_vocab: Vocab,
    pub params: ParamSet,
    pub init_seed: u64,
    pub arch: Architecture,
}

impl Seq2SeqModel {
    /// All parameters initialized i.i.d. uniform on [-0.1, 0.1], deterministic
    /// per seed.
    pub fn new(config: ModelConfig, name_vocab: Vocab, input_vocab: Vocab, seed: u64) -> Seq2SeqModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let arch =
            build_architecture(&config, input_vocab.len(), name_vocab.len(), &mut params, &mut rng);
        Seq2SeqModel { config, name_vocab, input_vocab, params, init_seed: seed, arch }
    }

    /// Rebuild the architecture for an existing parameter set (checkpoint
    /// load). Registration order is deterministic, so names must line up.
    pub fn from_params(
        config: ModelConfig,
        name_vocab: Vocab,
        input_vocab: Vocab,
        params: ParamSet,
        init_seed: u64,
    ) -> Result<Seq2SeqModel, ModelError> {
        let mut shadow = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let arch = build_architecture(
            &config,
            input_vocab.len(),
            name_vocab.len(),
            &mut shadow,
            &mut rng,
        );
        if shadow.len() != params.len() {
            return Err(ModelError::ConfigMismatch(format!(
                "expected {} parameter tensors, checkpoint has {}",
                shadow.len(),
                params.len()
            )));
        }
        for i in 0..shadow.len() {
            if shadow.name_of(i) != params.name_of(i)
                || shadow.get(i).shape != params.get(i).shape
            {
                return Err(ModelError::ConfigMismatch(format!(
                    "parameter {} ({:?}) does not match expected {} ({:?})",
                    params.name_of(i),
                    params.get(i).shape,
                    shadow.name_of(i),
                    shadow.get(i).shape
                )));
            }
        }
        Ok(Seq2SeqModel { config, name_vocab, input_vocab, params, init_seed, arch })
    }
}

/// Per-example extension of the name vocabulary with copyable input tokens.
#[derive(Debug, Clone)]
pub struct CopyMap {
    /// Input texts absent from the name vocabulary, first-occurrence order.
    pub ext_texts: Vec<String>,
    /// Per encoder position: index into [0, name_vocab + ext_texts).
    pub position_ids: Vec<usize>,
}

impl CopyMap {
    pub fn build(name_vocab: &Vocab, token_texts: &[String]) -> CopyMap {
        let mut ext_texts: Vec<String> = Vec::new();
        let mut position_ids = Vec::with_capacity(token_texts.len());
        for text in token_texts {
            let id = match name_vocab.lookup(text) {
                Some(id) => id,
                None => {
                    let slot = match ext_texts.iter().position(|t| t == text) {
                        Some(s) => s,
                        None => {
                            ext_texts.push(text.clone());
                            ext_texts.len() - 1
                        }
                    };
                    name_vocab.len() + slot
                }
            };
            position_ids.push(id);
        }
        CopyMap { ext_texts, position_ids }
    }

    /// Target id for a reference sub-token: vocabulary id, copy slot, or UNK.
    pub fn target_id(&self, name_vocab: &Vocab, text: &str) -> usize {
        if let Some(id) = name_vocab.lookup(text) {
            return id;
        }
        match self.ext_texts.iter().position(|t| t == text) {
            Some(slot) => name_vocab.len() + slot,
            None => UNK,
        }
    }

    pub fn text_of(&self, name_vocab: &Vocab, id: usize) -> String {
        if id < name_vocab.len() {
            name_vocab.token_of(id).unwrap_or("<unk>").to_string()
        } else {
            self.ext_texts[id - name_vocab.len()].clone()
        }
    }
}

pub struct EncodedInputs {
    /// Per-position encoder states, all streams concatenated in input order.
    pub positions: Vec<NodeId>,
    /// Token texts aligned with `positions`.
    pub token_texts: Vec<String>,
    /// Final (h, c) per encoder.
    pub finals: Vec<(NodeId, NodeId)>,
}

/// Decoder recurrent state, one (h, c) per stacked layer.
#[derive(Clone)]
pub struct DecoderState {
    pub layers: Vec<(NodeId, NodeId)>,
}

pub struct StepOutput {
    /// Probability distribution over the (possibly copy-extended) vocabulary.
    pub dist: NodeId,
    pub state: DecoderState,
}

impl Seq2SeqModel {
    pub fn encode(
        &self,
        tape: &mut Tape,
        example: &Example,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> EncodedInputs {
        let mut positions = Vec::new();
        let mut token_texts = Vec::new();
        let mut finals = Vec::new();
        for (stream, encoder) in example.inputs.iter().zip(&self.arch.encoders) {
            let texts: Vec<String> = if stream.is_empty() {
                vec!["<pad>".to_string()]
            } else {
                stream.clone()
            };
            let embedded: Vec<NodeId> = texts
                .iter()
                .map(|t| {
                    let id = self.input_vocab.lookup(t).unwrap_or(UNK);
                    tape.embed_row(self.arch.emb_in, id)
                })
                .collect();
            let encoded = encoder.encode(
                tape,
                &embedded,
                dropout.as_mut().map(|(r, rng)| (*r, &mut **rng)),
            );
            positions.extend(encoded.states);
            token_texts.extend(texts);
            finals.push((encoded.final_h, encoded.final_c));
        }
        EncodedInputs { positions, token_texts, finals }
    }

    /// Fused initial decoder state, shared by all stacked layers.
    pub fn initial_state(&self, tape: &mut Tape, enc: &EncodedInputs) -> DecoderState {
        let (h, c) = self.arch.fusion.fuse(tape, &enc.finals);
        DecoderState { layers: vec![(h, c); self.config.num_layers] }
    }

    /// One decode step from an embedded input token. Returns the output
    /// distribution (copy-extended when a `CopyMap` is supplied) and the new
    /// state.
    pub fn decode_step(
        &self,
        tape: &mut Tape,
        state: &DecoderState,
        input_emb: NodeId,
        enc: &EncodedInputs,
        copy: Option<&CopyMap>,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> StepOutput {
        let mut x = input_emb;
        let mut layers = Vec::with_capacity(self.arch.decoder.len());
        for (l, cell) in self.arch.decoder.iter().enumerate() {
            if l > 0 {
                if let Some((rate, rng)) = dropout.as_mut() {
                    let mask = dropout_mask(self.config.hidden_units, *rate, rng);
                    x = tape.mul_mask(x, mask);
                }
            }
            let (h, c) = state.layers[l];
            let (h2, c2) = cell.step(tape, x, h, c);
            layers.push((h2, c2));
            x = h2;
        }
        let top_h = x;

        let (pre_logits, context_and_weights) = match &self.arch.attention {
            Some(attention) => {
                let (ctx, weights, attn_hidden) = attention.attend(tape, top_h, &enc.positions);
                (attn_hidden, Some((ctx, weights)))
            }
            None => (top_h, None),
        };
        let logits = self.arch.out_proj.apply(tape, pre_logits);
        let pv = tape.softmax(logits);

        let dist = match (copy, &self.arch.copy_gate, context_and_weights) {
            (Some(copy_map), Some(gate), Some((ctx, weights))) => {
                let p_gen = gate.p_gen(tape, ctx, top_h, input_emb);
                tape.mix_copy(
                    pv,
                    p_gen,
                    weights,
                    copy_map.position_ids.clone(),
                    self.name_vocab.len() + copy_map.ext_texts.len(),
                )
            }
            _ => pv,
        };
        StepOutput { dist, state: DecoderState { layers } }
    }

    /// Embedding of a decoder input token id; copy-slot ids embed as UNK.
    pub fn output_embedding(&self, tape: &mut Tape, id: usize) -> NodeId {
        let id = if id < self.name_vocab.len() { id } else { UNK };
        tape.embed_row(self.arch.emb_out, id)
    }

    /// Mean per-step negative log likelihood of the reference name under
    /// teacher forcing: step t conditions on reference token t-1, starting
    /// from BOS and ending on EOS.
    pub fn forward_loss(
        &self,
        tape: &mut Tape,
        example: &Example,
        mut dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<NodeId, ModelError> {
        let needed = example.name_subtokens.len() + 1;
        if needed > self.config.max_decode_len {
            return Err(ModelError::ReferenceTooLong {
                needed,
                max: self.config.max_decode_len,
            });
        }
        let enc = self.encode(
            tape,
            example,
            dropout.as_mut().map(|(r, rng)| (*r, &mut **rng)),
        );
        let copy_map = self
            .config
            .use_copy
            .then(|| CopyMap::build(&self.name_vocab, &enc.token_texts));
        let mut state = self.initial_state(tape, &enc);

        // Teacher-forced inputs: BOS then the reference sub-tokens. Targets:
        // the reference sub-tokens then EOS.
        let mut teacher_ids = vec![BOS];
        teacher_ids.extend(
            example
                .name_subtokens
                .iter()
                .map(|t| self.name_vocab.lookup(t).unwrap_or(UNK)),
        );
        let target_ids: Vec<usize> = example
            .name_subtokens
            .iter()
            .map(|t| match &copy_map {
                Some(cm) => cm.target_id(&self.name_vocab, t),
                None => self.name_vocab.id_of(t),
            })
            .chain([EOS])
            .collect();

        let mut step_losses = Vec::with_capacity(target_ids.len());
        for (input_id, target_id) in teacher_ids.iter().zip(&target_ids) {
            let emb = self.output_embedding(tape, *input_id);
            let out = self.decode_step(
                tape,
                &state,
                emb,
                &enc,
                copy_map.as_ref(),
                dropout.as_mut().map(|(r, rng)| (*r, &mut **rng)),
            );
            step_losses.push(tape.neg_log_index(out.dist, *target_id));
            state = out.state;
        }
        Ok(tape.mean_scalars(step_losses))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;

    fn tiny_model(use_attention: bool, use_copy: bool) -> Seq2SeqModel {
        let name_vocab = Vocab::from_tokens(["a", "b", "_"].map(String::from));
        let input_vocab = Vocab::from_tokens(["x", "y", "z"].map(String::from));
        let config = ModelConfig {
            embedding_dim: 6,
            hidden_units: 5,
            use_attention,
            use_copy,
            ..ModelConfig::default()
        };
        Seq2SeqModel::new(config, name_vocab, input_vocab, 42)
    }

    fn example(name_subtokens: &[&str], input: &[&str]) -> Example {
        Example {
            qname: "T.d.x".into(),
            name: name_subtokens.concat(),
            name_subtokens: name_subtokens.iter().map(|s| s.to_string()).collect(),
            inputs: vec![input.iter().map(|s| s.to_string()).collect()],
        }
    }

    #[test]
    fn uniform_model_loss_is_ln_v() {
        // Zero all parameters: logits are identically 0, so the output
        // distribution is uniform over the name vocabulary.
        let mut model = tiny_model(false, false);
        for i in 0..model.params.len() {
            model.params.get_mut(i).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let ex = example(&["a", "_", "b"], &["x", "y"]);
        let mut tape = Tape::new(&model.params);
        let loss = model.forward_loss(&mut tape, &ex, None).unwrap();
        let v = model.name_vocab.len() as f64;
        assert!((tape.scalar(loss) - v.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_is_finite_with_attention_and_copy() {
        let model = tiny_model(true, true);
        let ex = example(&["a", "_", "b"], &["x", "oov_tok", "y"]);
        let mut tape = Tape::new(&model.params);
        let loss = model.forward_loss(&mut tape, &ex, None).unwrap();
        assert!(tape.scalar(loss).is_finite());
    }

    #[test]
    fn reference_too_long_is_an_error() {
        let name_vocab = Vocab::from_tokens(["a"].map(String::from));
        let input_vocab = Vocab::from_tokens(["x"].map(String::from));
        let config = ModelConfig {
            embedding_dim: 4,
            hidden_units: 3,
            max_decode_len: 2,
            ..ModelConfig::default()
        };
        let model = Seq2SeqModel::new(config, name_vocab, input_vocab, 1);
        let ex = example(&["a", "a", "a"], &["x"]);
        let mut tape = Tape::new(&model.params);
        assert_eq!(
            model.forward_loss(&mut tape, &ex, None).unwrap_err(),
            ModelError::ReferenceTooLong { needed: 4, max: 2 }
        );
    }

    #[test]
    fn equal_seeds_give_identical_parameters() {
        let a = tiny_model(true, true);
        let b = tiny_model(true, true);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn copy_map_assigns_slots_and_targets() {
        let name_vocab = Vocab::from_tokens(["a", "_"].map(String::from));
        let texts: Vec<String> = ["a", "fresh", "(", "fresh"].map(String::from).to_vec();
        let cm = CopyMap::build(&name_vocab, &texts);
        assert_eq!(cm.ext_texts, vec!["fresh".to_string(), "(".to_string()]);
        let v = name_vocab.len();
        assert_eq!(cm.position_ids, vec![name_vocab.id_of("a"), v, v + 1, v]);
        assert_eq!(cm.target_id(&name_vocab, "fresh"), v);
        assert_eq!(cm.target_id(&name_vocab, "missing"), UNK);
        assert_eq!(cm.text_of(&name_vocab, v), "fresh");
    }
}

//! Parameterized layers: affine, LSTM cell, stacked bi-directional LSTM
//! encoder, encoder-state fusion, bilinear attention, and the copy gate.
//! Each layer registers its tensors in a `ParamSet` and replays its forward
//! pass on a `Tape`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use super::tensor::ParamSet;

/// How attention scores a decoder state against an encoder position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AttentionScoring {
    /// Bilinear ("general") form: score = h_dec^T W e_i.
    #[default]
    Bilinear,
    /// Plain dot product; requires matching dimensions.
    DotProduct,
}

#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Affine {
        let w = params.register_uniform(format!("{prefix}.w"), vec![out_dim, in_dim], rng);
        let b = params.register_uniform(format!("{prefix}.b"), vec![out_dim], rng);
        Affine { w, b, in_dim, out_dim }
    }

    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let wx = tape.matvec(self.w, x);
        tape.add_param(wx, self.b)
    }
}

/// One LSTM cell: per-gate input weights (hidden x input), recurrent weights
/// (hidden x hidden), and biases. Gate order: input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_x: [usize; 4],
    pub w_h: [usize; 4],
    pub b: [usize; 4],
    pub input_dim: usize,
    pub hidden_dim: usize,
}

const GATES: [&str; 4] = ["i", "f", "g", "o"];

impl LstmCell {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> LstmCell {
        let mut w_x = [0; 4];
        let mut w_h = [0; 4];
        let mut b = [0; 4];
        for (gi, gate) in GATES.iter().enumerate() {
            w_x[gi] = params.register_uniform(
                format!("{prefix}.w_x{gate}"),
                vec![hidden_dim, input_dim],
                rng,
            );
            w_h[gi] = params.register_uniform(
                format!("{prefix}.w_h{gate}"),
                vec![hidden_dim, hidden_dim],
                rng,
            );
            b[gi] = params.register_uniform(format!("{prefix}.b_{gate}"), vec![hidden_dim], rng);
        }
        LstmCell { w_x, w_h, b, input_dim, hidden_dim }
    }

    /// One step: returns (h', c').
    pub fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId, c: NodeId) -> (NodeId, NodeId) {
        let mut pre = [0; 4];
        for gi in 0..4 {
            let wx = tape.matvec(self.w_x[gi], x);
            let wh = tape.matvec(self.w_h[gi], h);
            let sum = tape.add(wx, wh);
            pre[gi] = tape.add_param(sum, self.b[gi]);
        }
        let i = tape.sigmoid(pre[0]);
        let f = tape.sigmoid(pre[1]);
        let g = tape.tanh(pre[2]);
        let o = tape.sigmoid(pre[3]);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc);
        (h_next, c_next)
    }
}

/// Inverted-scaling dropout mask; applied only in training mode.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Stacked bi-directional LSTM encoder. Layer 0 consumes embeddings; deeper
/// layers consume the 2*hidden concatenated outputs of the layer below, with
/// dropout between layers at train time.
#[derive(Debug, Clone)]
pub struct BiLstmEncoder {
    pub layers: Vec<(LstmCell, LstmCell)>,
    pub hidden_dim: usize,
}

pub struct Encoded {
    /// Per-position states, each 2*hidden (forward and backward halves).
    pub states: Vec<NodeId>,
    /// Concatenated final hidden state (2*hidden).
    pub final_h: NodeId,
    /// Concatenated final cell state (2*hidden).
    pub final_c: NodeId,
}

impl BiLstmEncoder {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> BiLstmEncoder {
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let in_dim = if l == 0 { input_dim } else { 2 * hidden_dim };
            let fwd = LstmCell::register(params, &format!("{prefix}.l{l}.fwd"), in_dim, hidden_dim, rng);
            let bwd = LstmCell::register(params, &format!("{prefix}.l{l}.bwd"), in_dim, hidden_dim, rng);
            layers.push((fwd, bwd));
        }
        BiLstmEncoder { layers, hidden_dim }
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        inputs: &[NodeId],
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Encoded {
        assert!(!inputs.is_empty(), "encoder input must be non-empty");
        let n = inputs.len();
        let mut layer_inputs: Vec<NodeId> = inputs.to_vec();
        let mut final_h = (0, 0);
        let mut final_c = (0, 0);
        let mut dropout = dropout;
        let last = self.layers.len() - 1;
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            if l > 0 {
                if let Some((rate, rng)) = dropout.as_mut() {
                    let dim = 2 * self.hidden_dim;
                    layer_inputs = layer_inputs
                        .into_iter()
                        .map(|x| {
                            let mask = dropout_mask(dim, *rate, rng);
                            tape.mul_mask(x, mask)
                        })
                        .collect();
                }
            }
            let mut fwd_states = Vec::with_capacity(n);
            let mut h = tape.zeros(self.hidden_dim);
            let mut c = tape.zeros(self.hidden_dim);
            for &x in &layer_inputs {
                let (h2, c2) = fwd.step(tape, x, h, c);
                h = h2;
                c = c2;
                fwd_states.push(h);
            }
            let fwd_final = (h, c);

            let mut bwd_states = vec![0; n];
            let mut h = tape.zeros(self.hidden_dim);
            let mut c = tape.zeros(self.hidden_dim);
            for (i, &x) in layer_inputs.iter().enumerate().rev() {
                let (h2, c2) = bwd.step(tape, x, h, c);
                h = h2;
                c = c2;
                bwd_states[i] = h;
            }
            let bwd_final = (h, c);

            layer_inputs = (0..n)
                .map(|i| tape.concat(vec![fwd_states[i], bwd_states[i]]))
                .collect();
            if l == last {
                final_h = (fwd_final.0, bwd_final.0);
                final_c = (fwd_final.1, bwd_final.1);
            }
        }
        let final_h = tape.concat(vec![final_h.0, final_h.1]);
        let final_c = tape.concat(vec![final_c.0, final_c.1]);
        Encoded { states: layer_inputs, final_h, final_c }
    }
}

/// Maps the concatenated encoder finals to the decoder's initial state:
/// h_d = W_h concat([h_i]) + b_h and c_d = W_c concat([c_i]) + b_c.
#[derive(Debug, Clone, Copy)]
pub struct Fusion {
    pub for_h: Affine,
    pub for_c: Affine,
}

impl Fusion {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        concat_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Fusion {
        Fusion {
            for_h: Affine::register(params, &format!("{prefix}.h"), concat_dim, out_dim, rng),
            for_c: Affine::register(params, &format!("{prefix}.c"), concat_dim, out_dim, rng),
        }
    }

    pub fn fuse(
        &self,
        tape: &mut Tape,
        finals: &[(NodeId, NodeId)],
    ) -> (NodeId, NodeId) {
        assert!(!finals.is_empty(), "fusion needs at least one encoder final");
        let hs = tape.concat(finals.iter().map(|f| f.0).collect());
        let cs = tape.concat(finals.iter().map(|f| f.1).collect());
        (self.for_h.apply(tape, hs), self.for_c.apply(tape, cs))
    }
}

/// Attention over the concatenated positions of all encoders, plus the output
/// projection producing the attentional hidden state tanh(W [ctx; h_dec] + b).
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub scoring: AttentionScoring,
    /// Bilinear score matrix, decoder_dim x encoder_state_dim.
    pub w_score: Option<usize>,
    pub combine: Affine,
    pub enc_dim: usize,
    pub dec_dim: usize,
}

impl Attention {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        dec_dim: usize,
        enc_dim: usize,
        scoring: AttentionScoring,
        rng: &mut ChaCha8Rng,
    ) -> Attention {
        let w_score = match scoring {
            AttentionScoring::Bilinear => Some(params.register_uniform(
                format!("{prefix}.w_score"),
                vec![dec_dim, enc_dim],
                rng,
            )),
            AttentionScoring::DotProduct => {
                assert_eq!(dec_dim, enc_dim, "dot-product scoring needs equal dims");
                None
            }
        };
        let combine =
            Affine::register(params, &format!("{prefix}.combine"), enc_dim + dec_dim, dec_dim, rng);
        Attention { scoring, w_score, combine, enc_dim, dec_dim }
    }

    /// Returns (context, weights, attentional_hidden).
    pub fn attend(
        &self,
        tape: &mut Tape,
        dec_state: NodeId,
        enc_states: &[NodeId],
    ) -> (NodeId, NodeId, NodeId) {
        assert!(!enc_states.is_empty(), "attention needs at least one encoder position");
        let query = match self.w_score {
            Some(w) => tape.matvec_t(w, dec_state),
            None => dec_state,
        };
        let scores: Vec<NodeId> = enc_states.iter().map(|&e| tape.dot(query, e)).collect();
        let score_vec = tape.concat(scores);
        let weights = tape.softmax(score_vec);
        let context = tape.weighted_sum(weights, enc_states.to_vec());
        let cat = tape.concat(vec![context, dec_state]);
        let combined = self.combine.apply(tape, cat);
        let attn_hidden = tape.tanh(combined);
        (context, weights, attn_hidden)
    }
}

/// Generation-probability gate of the pointer-generator mixture:
/// p_gen = sigmoid(w [ctx; dec_state; dec_input] + b), in (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct CopyGate {
    pub gate: Affine,
}

impl CopyGate {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        ctx_dim: usize,
        dec_dim: usize,
        emb_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> CopyGate {
        CopyGate {
            gate: Affine::register(params, prefix, ctx_dim + dec_dim + emb_dim, 1, rng),
        }
    }

    pub fn p_gen(
        &self,
        tape: &mut Tape,
        context: NodeId,
        dec_state: NodeId,
        dec_input: NodeId,
    ) -> NodeId {
        let cat = tape.concat(vec![context, dec_state, dec_input]);
        let z = self.gate.apply(tape, cat);
        tape.sigmoid(z)
    }
}

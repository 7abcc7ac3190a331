//! Training loop: Adam updates over shuffled mini-batches with per-example
//! gradient accumulation, periodic validation, and early stopping on
//! validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nnet::{GradStore, ParamSet, Tape};

use super::config::TrainConfig;
use super::model::{Example, Seq2SeqModel};

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8) and
/// bias-corrected moment estimates.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: GradStore,
    v: GradStore,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: GradStore::zeros_like(params),
            v: GradStore::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &GradStore) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in 0..params.len() {
            let data = &mut params.get_mut(p).data;
            for i in 0..data.len() {
                let g = grads.grads[p][i];
                let m = &mut self.m.grads[p][i];
                let v = &mut self.v.grads[p][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Early stopping on validation loss: a checkpoint that fails to improve on
/// the best loss seen so far counts as a failure; `patience` consecutive
/// failures stop training, restoring the best checkpoint's parameters.
pub struct EarlyStopping {
    patience: usize,
    best_loss: Option<f64>,
    best_params: Option<ParamSet>,
    best_checkpoint: usize,
    consecutive_failures: usize,
    checkpoints_seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best_loss: None,
            best_params: None,
            best_checkpoint: 0,
            consecutive_failures: 0,
            checkpoints_seen: 0,
        }
    }

    /// Record a checkpoint's validation loss. Returns true when training
    /// should stop.
    pub fn observe(&mut self, val_loss: f64, params: &ParamSet) -> bool {
        self.checkpoints_seen += 1;
        let improved = match self.best_loss {
            None => true,
            Some(best) => val_loss < best,
        };
        if improved {
            self.best_loss = Some(val_loss);
            self.best_params = Some(params.clone());
            self.best_checkpoint = self.checkpoints_seen;
            self.consecutive_failures = 0;
            false
        } else {
            self.consecutive_failures += 1;
            self.consecutive_failures >= self.patience
        }
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best_loss
    }

    /// 1-based index of the checkpoint whose parameters are kept.
    pub fn best_checkpoint(&self) -> usize {
        self.best_checkpoint
    }

    pub fn take_best_params(&mut self) -> Option<ParamSet> {
        self.best_params.take()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub steps_taken: usize,
    pub stopped_early: bool,
    pub best_val_loss: Option<f64>,
    pub best_checkpoint: usize,
    pub log: Vec<TrainLogEntry>,
}

/// Mean teacher-forced loss over a set of examples, no dropout.
pub fn evaluate_loss(model: &Seq2SeqModel, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for ex in examples {
        let mut tape = Tape::new(&model.params);
        match model.forward_loss(&mut tape, ex, None) {
            Ok(loss) => total += tape.scalar(loss),
            Err(_) => continue,
        }
    }
    total / examples.len() as f64
}

/// Train in place. One step is one mini-batch: per-example gradients are
/// accumulated and scaled by 1/batch before the Adam update. Examples whose
/// reference exceeds the decode budget are skipped with a warning.
pub fn train(
    model: &mut Seq2SeqModel,
    train_examples: &[Example],
    val_examples: &[Example],
    config: &TrainConfig,
) -> TrainOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e3779b9));
    let mut optimizer = Adam::new(&model.params, config.learning_rate);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut log = Vec::new();

    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut cursor = order.len();
    let mut grads = GradStore::zeros_like(&model.params);
    let mut step = 0;
    let mut stopped_early = false;

    'outer: while step < config.max_steps {
        grads.clear();
        let mut batch_loss = 0.0;
        let mut batch_count = 0usize;
        while batch_count < config.batch_size {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let ex = &train_examples[order[cursor]];
            cursor += 1;
            let mut tape = Tape::new(&model.params);
            let dropout = (model.config.dropout > 0.0)
                .then_some((model.config.dropout, &mut dropout_rng));
            match model.forward_loss(&mut tape, ex, dropout) {
                Ok(loss) => {
                    batch_loss += tape.scalar(loss);
                    tape.backward(loss, &mut grads);
                    batch_count += 1;
                }
                Err(err) => {
                    eprintln!("warning: skipping {}: {err}", ex.qname);
                    // Guard against a pathological corpus where nothing fits.
                    if batch_count == 0 && cursor >= order.len() {
                        break 'outer;
                    }
                }
            }
        }
        grads.scale(1.0 / batch_count as f64);
        optimizer.step(&mut model.params, &grads);
        step += 1;

        let at_checkpoint = step % config.checkpoint_interval == 0;
        let val_loss = (at_checkpoint && !val_examples.is_empty())
            .then(|| evaluate_loss(model, val_examples));
        log.push(TrainLogEntry {
            step,
            train_loss: batch_loss / batch_count as f64,
            val_loss,
        });
        if let Some(vl) = val_loss {
            if stopper.observe(vl, &model.params) {
                stopped_early = true;
                break;
            }
        }
    }

    if stopped_early {
        if let Some(best) = stopper.take_best_params() {
            model.params = best;
        }
    }
    TrainOutcome {
        steps_taken: step,
        stopped_early,
        best_val_loss: stopper.best_loss(),
        best_checkpoint: stopper.best_checkpoint(),
        log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;
    use crate::seq2seq::config::ModelConfig;

    fn params_with_value(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        let id = p.register("w", crate::nnet::Tensor::zeros(vec![2]));
        p.get_mut(id).data = vec![v, v];
        p
    }

    #[test]
    fn early_stopping_keeps_the_best_checkpoint() {
        // Losses 5, 4, 4.1, 4.2, 4.3 with patience 3: stop at the fifth
        // checkpoint, keep checkpoint 2.
        let mut s = EarlyStopping::new(3);
        let losses = [5.0, 4.0, 4.1, 4.2, 4.3];
        let mut stopped_at = None;
        for (i, &loss) in losses.iter().enumerate() {
            if s.observe(loss, &params_with_value(loss)) {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(5));
        assert_eq!(s.best_checkpoint(), 2);
        assert_eq!(s.best_loss(), Some(4.0));
        assert_eq!(s.take_best_params().unwrap().get(0).data, vec![4.0, 4.0]);
    }

    #[test]
    fn early_stopping_resets_on_improvement() {
        let mut s = EarlyStopping::new(2);
        let p = params_with_value(0.0);
        assert!(!s.observe(3.0, &p));
        assert!(!s.observe(3.5, &p)); // failure 1
        assert!(!s.observe(2.0, &p)); // improvement resets
        assert!(!s.observe(2.5, &p)); // failure 1
        assert!(s.observe(2.6, &p)); // failure 2: stop
        assert_eq!(s.best_checkpoint(), 3);
    }

    #[test]
    fn equal_loss_counts_as_failure() {
        let mut s = EarlyStopping::new(1);
        let p = params_with_value(0.0);
        assert!(!s.observe(1.0, &p));
        assert!(s.observe(1.0, &p));
    }

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut params = params_with_value(1.0);
        let mut grads = GradStore::zeros_like(&params);
        grads.grads[0] = vec![0.5, -0.5];
        let mut opt = Adam::new(&params, 0.1);
        opt.step(&mut params, &grads);
        let data = &params.get(0).data;
        assert!(data[0] < 1.0);
        assert!(data[1] > 1.0);
    }

    #[test]
    fn training_reduces_loss_on_a_tiny_task() {
        let name_vocab = Vocab::from_tokens(["foo", "bar", "_"].map(String::from));
        let input_vocab = Vocab::from_tokens(["p", "q"].map(String::from));
        let config = ModelConfig {
            embedding_dim: 8,
            hidden_units: 8,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let mut model = Seq2SeqModel::new(config, name_vocab, input_vocab, 7);
        let examples = vec![
            Example {
                qname: "T.a".into(),
                name: "foo".into(),
                name_subtokens: vec!["foo".into()],
                inputs: vec![vec!["p".into()]],
            },
            Example {
                qname: "T.b".into(),
                name: "bar".into(),
                name_subtokens: vec!["bar".into()],
                inputs: vec![vec!["q".into()]],
            },
        ];
        let before = evaluate_loss(&model, &examples);
        let tc = TrainConfig { max_steps: 30, batch_size: 2, ..TrainConfig::default() };
        let outcome = train(&mut model, &examples, &[], &tc);
        let after = evaluate_loss(&model, &examples);
        assert_eq!(outcome.steps_taken, 30);
        assert!(!outcome.stopped_early);
        assert!(after < before, "loss {after} should improve on {before}");
    }
}

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::backprop::{window_loss_and_grads, BatchState, TokenBatch};
use super::{LanguageModel, LmError, Params, Scalar};
use crate::corpus::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub tokens_per_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<StepRecord>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// CSV with header `step,loss,tokens_per_sec`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,tokens_per_sec\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{:.1}", r.step, r.loss, r.tokens_per_sec);
        }
        out
    }
}

/// Splits a token stream into `rows` contiguous shards and serves consecutive
/// `seq_len + 1` windows from each, one window per row per step. Reaching the
/// end of a shard wraps every row back to its start and resets the carried
/// state.
pub struct WindowCursor {
    rows: usize,
    seq_len: usize,
    shard_len: usize,
    windows_per_epoch: usize,
    next: usize,
}

impl WindowCursor {
    pub fn new(corpus_len: usize, rows: usize, seq_len: usize) -> Result<Self, LmError> {
        let too_short = LmError::CorpusTooShort {
            len: corpus_len,
            seq_len,
            batch_size: rows,
        };
        if corpus_len <= rows * seq_len {
            return Err(too_short);
        }
        // the last window of the last shard needs one token past its end
        let shard_len = (corpus_len - 1) / rows;
        let windows_per_epoch = shard_len / seq_len;
        if windows_per_epoch == 0 {
            return Err(too_short);
        }
        Ok(WindowCursor {
            rows,
            seq_len,
            shard_len,
            windows_per_epoch,
            next: 0,
        })
    }

    pub fn windows_per_epoch(&self) -> usize {
        self.windows_per_epoch
    }

    /// Next batch and whether it starts a new pass over the shards.
    pub fn next_batch(&mut self, corpus: &[u32]) -> (TokenBatch, bool) {
        let w = self.next % self.windows_per_epoch;
        self.next += 1;
        let cols = self.seq_len + 1;
        let mut ids = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            let start = r * self.shard_len + w * self.seq_len;
            ids.extend_from_slice(&corpus[start..start + cols]);
        }
        (TokenBatch::new(self.rows, cols, ids), w == 0)
    }
}

/// Momentum SGD state kept across steps.
pub struct Optimizer<T> {
    velocity: Params<T>,
    learning_rate: T,
    momentum: T,
    grad_clip: f64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(model: &LanguageModel<T>) -> Self {
        Optimizer {
            velocity: Params::zeros(&model.config),
            learning_rate: T::lit(model.config.learning_rate),
            momentum: T::lit(model.config.momentum),
            grad_clip: model.config.grad_clip,
        }
    }

    /// Clips `grads` to the global norm cap, then `v = μv + g; θ -= lr·v`.
    pub fn apply(&mut self, model: &mut LanguageModel<T>, mut grads: Params<T>) {
        let norm = grads.squared_norm().sqrt();
        if norm > self.grad_clip {
            let s = T::lit(self.grad_clip / norm);
            for t in grads.tensors_mut() {
                for g in &mut t.data {
                    *g = *g * s;
                }
            }
        }
        for ((p, v), g) in model
            .params
            .tensors_mut()
            .into_iter()
            .zip(self.velocity.tensors_mut())
            .zip(grads.tensors())
        {
            for ((pv, vv), &gv) in p.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                *vv = self.momentum * *vv + gv;
                *pv = *pv - self.learning_rate * *vv;
            }
        }
        model.step_count += 1;
    }
}

/// Runs `steps` optimizer steps over `corpus`, calling `callback` after each.
///
/// Recurrent state is carried from one window to the next within a shard and
/// reset at shard boundaries. Aborts when the loss exceeds `1000 · ln V`.
pub fn train<T: Scalar>(
    model: &mut LanguageModel<T>,
    corpus: &TokenSequence,
    steps: u64,
    mut callback: impl FnMut(&StepRecord),
) -> Result<TrainingLog, LmError> {
    let cfg = model.config.clone();
    cfg.validate()?;
    let mut cursor = WindowCursor::new(corpus.len(), cfg.batch_size, cfg.seq_len)?;
    if let Some((pos, &id)) = corpus
        .ids
        .iter()
        .enumerate()
        .find(|(_, &id)| id as usize >= cfg.vocab_size)
    {
        return Err(LmError::TokenOutOfRange {
            id,
            position: pos,
            vocab_size: cfg.vocab_size,
        });
    }
    let limit = 1e3 * (cfg.vocab_size as f64).ln().max(1.0);
    let mut optimizer = Optimizer::new(model);
    let mut state: Option<BatchState<T>> = None;
    let mut log = TrainingLog::default();
    for _ in 0..steps {
        let started = Instant::now();
        let (batch, reset) = cursor.next_batch(&corpus.ids);
        if reset {
            state = None;
        }
        let out = window_loss_and_grads(model, &batch, state.as_ref())?;
        let step = model.step_count;
        if out.loss > limit {
            return Err(LmError::Diverged {
                step: step as usize,
                loss: out.loss,
                limit,
            });
        }
        optimizer.apply(model, out.grads);
        state = Some(out.state);
        let secs = started.elapsed().as_secs_f64().max(1e-9);
        let record = StepRecord {
            step,
            loss: out.loss,
            tokens_per_sec: (cfg.batch_size * cfg.seq_len) as f64 / secs,
        };
        callback(&record);
        log.records.push(record);
    }
    Ok(log)
}

/// Mean cross-entropy per predicted token over one full pass of the training
/// windows (same shards, window length and carried state as [`train`]),
/// without updating the model.
pub fn epoch_loss<T: Scalar>(model: &LanguageModel<T>, corpus: &TokenSequence) -> Result<f64, LmError> {
    let cfg = &model.config;
    let mut cursor = WindowCursor::new(corpus.len(), cfg.batch_size, cfg.seq_len)?;
    let mut state: Option<BatchState<T>> = None;
    let mut total = 0.0;
    let windows = cursor.windows_per_epoch();
    for _ in 0..windows {
        let (batch, _) = cursor.next_batch(&corpus.ids);
        let out = window_loss_and_grads(model, &batch, state.as_ref())?;
        total += out.loss;
        state = Some(out.state);
    }
    Ok(total / windows as f64)
}

//! Word-level LSTM language model implemented from scratch.
//!
//! The model factorizes a sequence probability into next-word conditionals,
//! `ln p(w) = Σ ln p(w_i | w_1..w_{i-1})`, with conditioning starting at BOS.
//! Parameters are `f32`; the same code runs on `f64` for gradient checks.

pub mod backprop;
pub mod checkpoint;
pub mod kernels;
pub mod train;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::vocab::BOS;
use kernels::{add_row_bias, log_softmax, matmul_acc, sigmoid, softmax};

pub use backprop::{loss_and_grads, TokenBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use train::{train, StepRecord, TrainingLog};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("token id {id} at position {position} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange {
        id: u32,
        position: usize,
        vocab_size: usize,
    },
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("batch is {rows}×{cols}, expected {want_rows}×{want_cols}")]
    BatchShape {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },
    #[error("training diverged at step {step}: loss {loss} exceeds {limit}")]
    Diverged { step: usize, loss: f64, limit: f64 },
    #[error("corpus of {len} tokens is too short for {batch_size} rows of {seq_len}-token windows")]
    CorpusTooShort {
        len: usize,
        seq_len: usize,
        batch_size: usize,
    },
}

/// Floating point type the model can run on.
pub trait Scalar: Float + Sum + Send + Sync + Debug + Default + 'static {
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub units: usize,
    /// BPTT window length.
    pub seq_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm cap.
    pub grad_clip: f64,
    /// Weights are drawn uniformly from `±init_scale`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            vocab_size: 20_004,
            embed_dim: 128,
            layers: 2,
            units: 128,
            seq_len: 50,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            grad_clip: 5.0,
            init_scale: 0.05,
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: &str| Err(LmError::InvalidConfig(m.to_string()));
        if self.vocab_size < 1 {
            return bad("vocab_size must be at least 1");
        }
        if self.embed_dim < 1 {
            return bad("embed_dim must be at least 1");
        }
        if self.layers < 1 {
            return bad("layers must be at least 1");
        }
        if self.units < 1 {
            return bad("units must be at least 1");
        }
        if self.seq_len < 2 {
            return bad("seq_len must be at least 2");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter tensor, in registry order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.units;
        let mut out = vec![("embedding".to_string(), vec![self.vocab_size, self.embed_dim])];
        for l in 0..self.layers {
            let input = if l == 0 { self.embed_dim } else { h };
            out.push((format!("lstm.{l}.w_input"), vec![input, 4 * h]));
            out.push((format!("lstm.{l}.w_recurrent"), vec![h, 4 * h]));
            out.push((format!("lstm.{l}.bias"), vec![4 * h]));
        }
        out.push(("output.weight".to_string(), vec![h, self.vocab_size]));
        out.push(("output.bias".to_string(), vec![self.vocab_size]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// input × 4H, gate blocks ordered input, forget, candidate, output.
    pub w_input: Tensor<T>,
    /// H × 4H
    pub w_recurrent: Tensor<T>,
    /// 4H
    pub bias: Tensor<T>,
}

/// Every trainable tensor. Gradients and momentum buffers share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub embedding: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub out_weight: Tensor<T>,
    pub out_bias: Tensor<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(config: &LmConfig) -> Self {
        let h = config.units;
        Params {
            embedding: Tensor::zeros(&[config.vocab_size, config.embed_dim]),
            layers: (0..config.layers)
                .map(|l| {
                    let input = if l == 0 { config.embed_dim } else { h };
                    LayerParams {
                        w_input: Tensor::zeros(&[input, 4 * h]),
                        w_recurrent: Tensor::zeros(&[h, 4 * h]),
                        bias: Tensor::zeros(&[4 * h]),
                    }
                })
                .collect(),
            out_weight: Tensor::zeros(&[h, config.vocab_size]),
            out_bias: Tensor::zeros(&[config.vocab_size]),
        }
    }

    /// Tensors in registry order (matches [`LmConfig::tensor_shapes`]).
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.embedding];
        for l in &self.layers {
            out.extend([&l.w_input, &l.w_recurrent, &l.bias]);
        }
        out.extend([&self.out_weight, &self.out_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        for l in &mut self.layers {
            out.extend([&mut l.w_input, &mut l.w_recurrent, &mut l.bias]);
        }
        out.extend([&mut self.out_weight, &mut self.out_bias]);
        out
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            embedding: self.embedding.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w_input: l.w_input.cast(),
                    w_recurrent: l.w_recurrent.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
            out_weight: self.out_weight.cast(),
            out_bias: self.out_bias.cast(),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Recurrent state for one sequence: `h` and `c` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LmState<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> LmState<T> {
    pub fn zeros(config: &LmConfig) -> Self {
        LmState {
            h: vec![vec![T::zero(); config.units]; config.layers],
            c: vec![vec![T::zero(); config.units]; config.layers],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel<T = f32> {
    pub config: LmConfig,
    pub params: Params<T>,
    pub step_count: u64,
}

/// Activations of one LSTM layer at one time step for a batch of rows.
pub(crate) struct CellOut<T> {
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub o: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

/// One LSTM step for `rows` rows. `x` is rows×input, `h_prev`/`c_prev` rows×H.
pub(crate) fn lstm_cell<T: Scalar>(
    layer: &LayerParams<T>,
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    rows: usize,
    units: usize,
) -> CellOut<T> {
    let input = layer.w_input.shape[0];
    let g4 = 4 * units;
    let mut z = vec![T::zero(); rows * g4];
    matmul_acc(x, &layer.w_input.data, &mut z, rows, input, g4);
    matmul_acc(h_prev, &layer.w_recurrent.data, &mut z, rows, units, g4);
    add_row_bias(&mut z, &layer.bias.data);
    let n = rows * units;
    let mut out = CellOut {
        i: Vec::with_capacity(n),
        f: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        o: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        tanh_c: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
    };
    for r in 0..rows {
        let zr = &z[r * g4..(r + 1) * g4];
        for u in 0..units {
            let i = sigmoid(zr[u]);
            let f = sigmoid(zr[units + u]);
            let g = zr[2 * units + u].tanh();
            let o = sigmoid(zr[3 * units + u]);
            let c = f * c_prev[r * units + u] + i * g;
            let tc = c.tanh();
            out.i.push(i);
            out.f.push(f);
            out.g.push(g);
            out.o.push(o);
            out.c.push(c);
            out.tanh_c.push(tc);
            out.h.push(o * tc);
        }
    }
    out
}

impl<T: Scalar> LanguageModel<T> {
    /// Random initialization: weights uniform in `±init_scale`, biases zero
    /// except the forget gate, which starts at 1.
    pub fn new(config: LmConfig) -> Result<Self, LmError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::zeros(&config);
        let scale = config.init_scale;
        let h = config.units;
        let mut fill = |t: &mut Tensor<T>| {
            for v in &mut t.data {
                *v = T::lit(rng.gen_range(-scale..=scale));
            }
        };
        fill(&mut params.embedding);
        for l in &mut params.layers {
            fill(&mut l.w_input);
            fill(&mut l.w_recurrent);
            for v in &mut l.bias.data[h..2 * h] {
                *v = T::one();
            }
        }
        fill(&mut params.out_weight);
        Ok(LanguageModel {
            config,
            params,
            step_count: 0,
        })
    }

    /// A model whose every parameter is zero.
    pub fn zeroed(config: LmConfig) -> Result<Self, LmError> {
        config.validate()?;
        Ok(LanguageModel {
            params: Params::zeros(&config),
            config,
            step_count: 0,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn cast<U: Scalar>(&self) -> LanguageModel<U> {
        LanguageModel {
            config: self.config.clone(),
            params: self.params.cast(),
            step_count: self.step_count,
        }
    }

    pub fn zero_state(&self) -> LmState<T> {
        LmState::zeros(&self.config)
    }

    fn check_id(&self, id: u32, position: usize) -> Result<(), LmError> {
        if (id as usize) < self.config.vocab_size {
            Ok(())
        } else {
            Err(LmError::TokenOutOfRange {
                id,
                position,
                vocab_size: self.config.vocab_size,
            })
        }
    }

    /// Feeds one token and returns next-token logits.
    pub fn step_logits(&self, token: u32, state: &mut LmState<T>) -> Result<Vec<T>, LmError> {
        self.check_id(token, 0)?;
        let e = self.config.embed_dim;
        let units = self.config.units;
        let mut x: Vec<T> = self.params.embedding.data[token as usize * e..(token as usize + 1) * e].to_vec();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let out = lstm_cell(layer, &x, &state.h[l], &state.c[l], 1, units);
            state.c[l] = out.c;
            state.h[l] = out.h.clone();
            x = out.h;
        }
        let v = self.config.vocab_size;
        let mut logits = self.params.out_bias.data.clone();
        matmul_acc(&x, &self.params.out_weight.data, &mut logits, 1, units, v);
        Ok(logits)
    }

    /// Next-token distributions after each input token, carrying `state`.
    pub fn forward(&self, ids: &[u32], state: &LmState<T>) -> Result<(Vec<Vec<T>>, LmState<T>), LmError> {
        if ids.is_empty() {
            return Err(LmError::EmptyInput);
        }
        for (pos, &id) in ids.iter().enumerate() {
            self.check_id(id, pos)?;
        }
        let mut state = state.clone();
        let mut rows = Vec::with_capacity(ids.len());
        for &id in ids {
            let logits = self.step_logits(id, &mut state)?;
            rows.push(softmax(&logits));
        }
        Ok((rows, state))
    }

    /// Natural-log probability of `ids` conditioned on BOS.
    pub fn sequence_logprob(&self, ids: &[u32]) -> Result<f64, LmError> {
        if ids.is_empty() {
            return Err(LmError::EmptyInput);
        }
        for (pos, &id) in ids.iter().enumerate() {
            self.check_id(id, pos)?;
        }
        let mut state = self.zero_state();
        let mut prev = BOS;
        let mut total = 0.0f64;
        for &id in ids {
            let logits = self.step_logits(prev, &mut state)?;
            total += log_softmax(&logits)[id as usize].as_f64();
            prev = id;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vocab: usize) -> LmConfig {
        LmConfig {
            vocab_size: vocab,
            embed_dim: 6,
            layers: 2,
            units: 5,
            seq_len: 4,
            batch_size: 2,
            init_scale: 0.3,
            seed: 11,
            ..LmConfig::default()
        }
    }

    #[test]
    fn rows_are_distributions() {
        let m = LanguageModel::<f32>::new(tiny(12)).unwrap();
        let (rows, _) = m.forward(&[1, 5, 7, 11, 2], &m.zero_state()).unwrap();
        assert_eq!(rows.len(), 5);
        for r in rows {
            assert!(r.iter().all(|&p| p >= 0.0));
            let s: f64 = r.iter().map(|&p| p as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn output_bias_only_model_is_input_independent() {
        let mut m = LanguageModel::<f64>::zeroed(tiny(5)).unwrap();
        m.params.out_bias.data = vec![0.5, -1.0, 2.0, 0.0, 0.25];
        let want = softmax(&m.params.out_bias.data);
        let (rows, _) = m.forward(&[4, 0, 3, 3], &m.zero_state()).unwrap();
        for r in rows {
            for (a, b) in r.iter().zip(&want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn split_and_full_forward_agree() {
        let m = LanguageModel::<f32>::new(tiny(30)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ids: Vec<u32> = (0..20).map(|_| rng.gen_range(0..30)).collect();
        let (full, full_state) = m.forward(&ids, &m.zero_state()).unwrap();
        let (a, mid) = m.forward(&ids[..9], &m.zero_state()).unwrap();
        let (b, end) = m.forward(&ids[9..], &mid).unwrap();
        let split: Vec<_> = a.into_iter().chain(b).collect();
        for (x, y) in full.iter().flatten().zip(split.iter().flatten()) {
            assert!((x - y).abs() <= 1e-6);
        }
        assert_eq!(full_state, end);
    }

    #[test]
    fn out_of_range_token() {
        let m = LanguageModel::<f32>::new(tiny(8)).unwrap();
        assert!(matches!(
            m.forward(&[1, 8], &m.zero_state()),
            Err(LmError::TokenOutOfRange { id: 8, position: 1, .. })
        ));
        assert!(matches!(m.forward(&[], &m.zero_state()), Err(LmError::EmptyInput)));
    }

    #[test]
    fn uniform_model_logprob() {
        let m = LanguageModel::<f64>::zeroed(tiny(7)).unwrap();
        let lp = m.sequence_logprob(&[4, 5, 6]).unwrap();
        assert!((lp + 3.0 * 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_token_logprob_is_first_step() {
        let m = LanguageModel::<f64>::new(tiny(9)).unwrap();
        let (rows, _) = m.forward(&[BOS], &m.zero_state()).unwrap();
        let lp = m.sequence_logprob(&[6]).unwrap();
        assert!((lp - rows[0][6].ln()).abs() < 1e-12);
    }

    #[test]
    fn parameter_count_closed_form() {
        let cfg = LmConfig {
            vocab_size: 20_000,
            embed_dim: 128,
            layers: 2,
            units: 128,
            ..LmConfig::default()
        };
        let (v, e, h) = (20_000, 128, 128);
        let want = v * e + ((e + h) * 4 * h + 4 * h) + ((h + h) * 4 * h + 4 * h) + h * v + v;
        assert_eq!(cfg.parameter_count(), want);
        assert_eq!(want, 5_403_168);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let m = LanguageModel::<f32>::new(tiny(8)).unwrap();
        let b = &m.params.layers[0].bias.data;
        assert!(b[5..10].iter().all(|&v| v == 1.0));
        assert!(b[..5].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        for bad in [
            LmConfig { layers: 0, ..tiny(5) },
            LmConfig { units: 0, ..tiny(5) },
            LmConfig { seq_len: 1, ..tiny(5) },
            LmConfig { grad_clip: 0.0, ..tiny(5) },
        ] {
            assert!(LanguageModel::<f32>::new(bad).is_err());
        }
    }
}

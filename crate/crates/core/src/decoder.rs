//! Text generation from a trained model: temperature sampling and beam search.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::vocab::{BOS, EOS, UNK};
use crate::corpus::{detokenize, Vocabulary};
use crate::lm::kernels::log_softmax;
use crate::lm::{LanguageModel, LmError, LmState, Scalar};

/// Temperatures below this decode greedily.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode params: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Model(#[from] LmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("pool file line {line}: {message}")]
    Pool { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Sample,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub temperature: f64,
    pub beam_width: usize,
    pub max_tokens: usize,
    pub length_norm_alpha: f64,
    pub seed: u64,
    /// Never emit the unknown-word token.
    pub ban_unk: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            mode: DecodeMode::Sample,
            temperature: 0.8,
            beam_width: 8,
            max_tokens: 400,
            length_norm_alpha: 0.7,
            seed: 0,
            ban_unk: true,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::InvalidParams(m.to_string()));
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if self.beam_width < 1 {
            return bad("beam_width must be at least 1");
        }
        if self.max_tokens < 1 {
            return bad("max_tokens must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.length_norm_alpha) {
            return bad("length_norm_alpha must be in [0, 1]");
        }
        Ok(())
    }

    fn allowed(&self, token: usize) -> bool {
        token != BOS as usize && !(self.ban_unk && token == UNK as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub id: String,
    pub topic: String,
    /// Prompt plus generated tokens, including a final EOS when one was emitted.
    pub ids: Vec<u32>,
    pub text: String,
    /// `ln p(ids)` under the model, conditioned on BOS.
    pub logprob: f64,
    pub params: DecodeParams,
    pub model_checkpoint: String,
}

/// Feeds BOS and the prompt; returns the state, next logits and prompt logprob.
fn prime<T: Scalar>(model: &LanguageModel<T>, prompt: &[u32]) -> Result<(LmState<T>, Vec<T>, f64), LmError> {
    let mut state = model.zero_state();
    let mut logits = model.step_logits(BOS, &mut state)?;
    let mut logprob = 0.0;
    for &id in prompt {
        if id as usize >= model.vocab_size() {
            return Err(LmError::TokenOutOfRange {
                id,
                position: 0,
                vocab_size: model.vocab_size(),
            });
        }
        logprob += log_softmax(&logits)[id as usize].as_f64();
        logits = model.step_logits(id, &mut state)?;
    }
    Ok((state, logits, logprob))
}

fn argmax_allowed<T: Scalar>(logits: &[T], params: &DecodeParams) -> usize {
    let mut best: Option<usize> = None;
    for (k, &l) in logits.iter().enumerate() {
        if !params.allowed(k) {
            continue;
        }
        if best.is_none_or(|b| l > logits[b]) {
            best = Some(k);
        }
    }
    best.unwrap_or(EOS as usize)
}

/// Draws one token from `softmax(logits / temperature)` over the allowed ids.
pub fn draw_token<T: Scalar>(logits: &[T], params: &DecodeParams, rng: &mut ChaCha8Rng) -> usize {
    if params.temperature < GREEDY_TEMPERATURE {
        return argmax_allowed(logits, params);
    }
    let scaled: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if params.allowed(k) {
                l.as_f64() / params.temperature
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        acc += w;
        last = Some(k);
        if u < acc {
            return k;
        }
    }
    last.unwrap_or(EOS as usize)
}

/// Samples until EOS or `max_tokens` new tokens; returns ids and their logprob.
pub fn sample_ids<T: Scalar>(
    model: &LanguageModel<T>,
    params: &DecodeParams,
    prompt: &[u32],
) -> Result<(Vec<u32>, f64), DecodeError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (mut state, mut logits, mut logprob) = prime(model, prompt)?;
    let mut ids = prompt.to_vec();
    for _ in 0..params.max_tokens {
        let next = draw_token(&logits, params, &mut rng);
        logprob += log_softmax(&logits)[next].as_f64();
        ids.push(next as u32);
        if next as u32 == EOS {
            break;
        }
        logits = model.step_logits(next as u32, &mut state)?;
    }
    Ok((ids, logprob))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamResult {
    pub ids: Vec<u32>,
    pub logprob: f64,
    /// `logprob / len^alpha`, the ranking key.
    pub score: f64,
}

struct Hypothesis<T> {
    ids: Vec<u32>,
    logprob: f64,
    state: LmState<T>,
    logits: Vec<T>,
}

fn score(logprob: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        logprob
    } else {
        logprob / (len.max(1) as f64).powf(alpha)
    }
}

fn rank_key(a: (f64, &[u32], u32), b: (f64, &[u32], u32)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.cmp(b.1))
        .then_with(|| a.2.cmp(&b.2))
}

/// Beam search keeping the `beam_width` best candidates per step. Candidates
/// ending in EOS, or reaching `max_tokens`, retire to the result pool. Results
/// are ordered by score, ties by token ids.
pub fn beam_search<T: Scalar>(
    model: &LanguageModel<T>,
    params: &DecodeParams,
    prompt: &[u32],
) -> Result<Vec<BeamResult>, DecodeError> {
    params.validate()?;
    let alpha = params.length_norm_alpha;
    let (state, logits, logprob) = prime(model, prompt)?;
    let mut active = vec![Hypothesis {
        ids: prompt.to_vec(),
        logprob,
        state,
        logits,
    }];
    let mut finished: Vec<BeamResult> = Vec::new();
    for step in 0..params.max_tokens {
        let mut cands: Vec<(f64, usize, u32, f64)> = Vec::new();
        for (h, hyp) in active.iter().enumerate() {
            let lp = log_softmax(&hyp.logits);
            for (k, &l) in lp.iter().enumerate() {
                if !params.allowed(k) {
                    continue;
                }
                let total = hyp.logprob + l.as_f64();
                cands.push((score(total, hyp.ids.len() + 1, alpha), h, k as u32, total));
            }
        }
        cands.sort_by(|a, b| rank_key((a.0, &active[a.1].ids, a.2), (b.0, &active[b.1].ids, b.2)));
        cands.truncate(params.beam_width);
        let last_step = step + 1 == params.max_tokens;
        let mut next = Vec::new();
        for (s, h, k, total) in cands {
            let parent = &active[h];
            let mut ids = parent.ids.clone();
            ids.push(k);
            if k == EOS || last_step {
                finished.push(BeamResult {
                    ids,
                    logprob: total,
                    score: s,
                });
            } else {
                let mut state = parent.state.clone();
                let logits = model.step_logits(k, &mut state)?;
                next.push(Hypothesis {
                    ids,
                    logprob: total,
                    state,
                    logits,
                });
            }
        }
        active = next;
        if active.is_empty() {
            break;
        }
    }
    finished.sort_by(|a, b| rank_key((a.score, &a.ids, 0), (b.score, &b.ids, 0)));
    Ok(finished)
}

/// Binds a model to its vocabulary and provenance labels.
pub struct Generator<'a> {
    pub model: &'a LanguageModel<f32>,
    pub vocab: &'a Vocabulary,
    pub topic: String,
    pub checkpoint: String,
}

impl Generator<'_> {
    fn make_sample(&self, params: &DecodeParams, ids: Vec<u32>, logprob: f64) -> GeneratedSample {
        GeneratedSample {
            id: format!("{}-{}", crate::slug::slugify(&self.topic), params.seed),
            topic: self.topic.clone(),
            text: detokenize(&ids, self.vocab),
            ids,
            logprob,
            params: params.clone(),
            model_checkpoint: self.checkpoint.clone(),
        }
    }

    pub fn sample(&self, params: &DecodeParams, prompt: &[u32]) -> Result<GeneratedSample, DecodeError> {
        let (ids, logprob) = sample_ids(self.model, params, prompt)?;
        Ok(self.make_sample(params, ids, logprob))
    }

    /// Top beam result as a sample.
    pub fn beam(&self, params: &DecodeParams, prompt: &[u32]) -> Result<GeneratedSample, DecodeError> {
        let best = beam_search(self.model, params, prompt)?
            .into_iter()
            .next()
            .expect("beam search always retires at least one hypothesis");
        Ok(self.make_sample(params, best.ids, best.logprob))
    }

    /// `count` samples with seeds `seed, seed+1, ...`, generated in parallel and
    /// returned in seed order. In beam mode each sample's first token is drawn
    /// with its own seed and the rest is beam-decoded from there.
    pub fn generate_pool(&self, params: &DecodeParams, count: usize) -> Result<Vec<GeneratedSample>, DecodeError> {
        params.validate()?;
        if count < 1 {
            return Err(DecodeError::InvalidParams("count must be at least 1".into()));
        }
        (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let p = DecodeParams {
                    seed: params.seed.wrapping_add(i),
                    ..params.clone()
                };
                match p.mode {
                    DecodeMode::Sample => self.sample(&p, &[]),
                    DecodeMode::Beam => {
                        let first = DecodeParams {
                            mode: DecodeMode::Sample,
                            max_tokens: 1,
                            ..p.clone()
                        };
                        let (head, _) = sample_ids(self.model, &first, &[])?;
                        if head.last() == Some(&EOS) {
                            let lp = self.model.sequence_logprob(&head)?;
                            return Ok(self.make_sample(&p, head, lp));
                        }
                        self.beam(&p, &head)
                    }
                }
            })
            .collect()
    }
}

pub fn write_pool(path: &Path, samples: &[GeneratedSample]) -> Result<(), DecodeError> {
    crate::io::write_atomic(path, crate::io::to_jsonl(samples).as_bytes())?;
    Ok(())
}

pub fn read_pool(path: &Path) -> Result<Vec<GeneratedSample>, DecodeError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DecodeError::Pool {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

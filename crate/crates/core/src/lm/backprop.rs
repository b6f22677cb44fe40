//! Teacher-forced cross-entropy and full backpropagation through the window.

use super::kernels::{acc_col_sums, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, softmax};
use super::{lstm_cell, CellOut, LanguageModel, LmError, Params, Scalar};

/// `rows × cols` token ids; inputs are columns `0..cols-1`, targets `1..cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub rows: usize,
    pub cols: usize,
    pub ids: Vec<u32>,
}

impl TokenBatch {
    pub fn new(rows: usize, cols: usize, ids: Vec<u32>) -> Self {
        assert_eq!(ids.len(), rows * cols, "batch data does not match its shape");
        TokenBatch { rows, cols, ids }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let ids: Vec<u32> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, ids)
    }

    fn at(&self, r: usize, c: usize) -> u32 {
        self.ids[r * self.cols + c]
    }
}

/// Hidden and cell state of every batch row, one `rows × H` block per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> BatchState<T> {
    pub fn zeros(layers: usize, rows: usize, units: usize) -> Self {
        BatchState {
            h: vec![vec![T::zero(); rows * units]; layers],
            c: vec![vec![T::zero(); rows * units]; layers],
        }
    }
}

pub struct LossAndGrads<T> {
    /// Mean cross-entropy per predicted token (nats).
    pub loss: f64,
    pub grads: Params<T>,
    /// State after the last input column, for carrying into the next window.
    pub state: BatchState<T>,
}

struct StepCache<T> {
    inputs: Vec<Vec<T>>,
    h_prev: Vec<Vec<T>>,
    c_prev: Vec<Vec<T>>,
    cells: Vec<CellOut<T>>,
}

/// Loss and gradients for a batch whose shape must be
/// `batch_size × (seq_len + 1)` under the model config.
pub fn loss_and_grads<T: Scalar>(
    model: &LanguageModel<T>,
    batch: &TokenBatch,
    init: Option<&BatchState<T>>,
) -> Result<LossAndGrads<T>, LmError> {
    let cfg = &model.config;
    if batch.rows != cfg.batch_size || batch.cols != cfg.seq_len + 1 {
        return Err(LmError::BatchShape {
            rows: batch.rows,
            cols: batch.cols,
            want_rows: cfg.batch_size,
            want_cols: cfg.seq_len + 1,
        });
    }
    window_loss_and_grads(model, batch, init)
}

/// Same as [`loss_and_grads`] without the config shape check.
pub fn window_loss_and_grads<T: Scalar>(
    model: &LanguageModel<T>,
    batch: &TokenBatch,
    init: Option<&BatchState<T>>,
) -> Result<LossAndGrads<T>, LmError> {
    let cfg = &model.config;
    let (rows, steps) = (batch.rows, batch.cols.saturating_sub(1));
    if rows == 0 || steps == 0 {
        return Err(LmError::EmptyInput);
    }
    for (pos, &id) in batch.ids.iter().enumerate() {
        if id as usize >= cfg.vocab_size {
            return Err(LmError::TokenOutOfRange {
                id,
                position: pos,
                vocab_size: cfg.vocab_size,
            });
        }
    }
    let (e, units, v, layers) = (cfg.embed_dim, cfg.units, cfg.vocab_size, cfg.layers);
    let p = &model.params;
    let mut grads = Params::zeros(cfg);
    let mut state = init
        .cloned()
        .unwrap_or_else(|| BatchState::zeros(layers, rows, units));
    let scale = T::lit(1.0 / (rows * steps) as f64);

    let mut caches: Vec<StepCache<T>> = Vec::with_capacity(steps);
    // gradient flowing into the top hidden state from the output layer, per step
    let mut dh_top: Vec<Vec<T>> = Vec::with_capacity(steps);
    let mut loss = 0.0f64;

    for t in 0..steps {
        let mut x = vec![T::zero(); rows * e];
        for r in 0..rows {
            let id = batch.at(r, t) as usize;
            x[r * e..(r + 1) * e].copy_from_slice(&p.embedding.data[id * e..(id + 1) * e]);
        }
        let mut cache = StepCache {
            inputs: Vec::with_capacity(layers),
            h_prev: Vec::with_capacity(layers),
            c_prev: Vec::with_capacity(layers),
            cells: Vec::with_capacity(layers),
        };
        for (l, layer) in p.layers.iter().enumerate() {
            let out = lstm_cell(layer, &x, &state.h[l], &state.c[l], rows, units);
            cache.inputs.push(std::mem::replace(&mut x, out.h.clone()));
            cache.h_prev.push(std::mem::replace(&mut state.h[l], out.h.clone()));
            cache.c_prev.push(std::mem::replace(&mut state.c[l], out.c.clone()));
            cache.cells.push(out);
        }

        // output layer: forward, loss, and its backward pass right away
        let mut logits = vec![T::zero(); rows * v];
        for row in logits.chunks_mut(v) {
            row.copy_from_slice(&p.out_bias.data);
        }
        matmul_acc(&x, &p.out_weight.data, &mut logits, rows, units, v);
        let mut dlogits = vec![T::zero(); rows * v];
        for r in 0..rows {
            let target = batch.at(r, t + 1) as usize;
            let row = &logits[r * v..(r + 1) * v];
            let probs = softmax(row);
            let pt = probs[target].as_f64();
            let term = -pt.ln();
            if !term.is_finite() {
                return Err(LmError::NonFinite { step: t });
            }
            loss += term;
            let d = &mut dlogits[r * v..(r + 1) * v];
            for (k, (dv, pv)) in d.iter_mut().zip(probs).enumerate() {
                let y = if k == target { T::one() } else { T::zero() };
                *dv = (pv - y) * scale;
            }
        }
        matmul_at_b_acc(&x, &dlogits, &mut grads.out_weight.data, rows, units, v);
        acc_col_sums(&dlogits, &mut grads.out_bias.data);
        let mut dh = vec![T::zero(); rows * units];
        matmul_a_bt_acc(&dlogits, &p.out_weight.data, &mut dh, rows, v, units);
        dh_top.push(dh);
        caches.push(cache);
    }
    let loss = loss / (rows * steps) as f64;
    if !loss.is_finite() {
        return Err(LmError::NonFinite { step: steps - 1 });
    }

    let g4 = 4 * units;
    let mut dh_next: Vec<Vec<T>> = vec![vec![T::zero(); rows * units]; layers];
    let mut dc_next: Vec<Vec<T>> = vec![vec![T::zero(); rows * units]; layers];
    for t in (0..steps).rev() {
        let cache = &caches[t];
        // gradient w.r.t. the output h of the layer currently being processed
        let mut dh_from_above = std::mem::take(&mut dh_top[t]);
        for l in (0..layers).rev() {
            let cell = &cache.cells[l];
            let layer = &p.layers[l];
            let lg = &mut grads.layers[l];
            let mut dz = vec![T::zero(); rows * g4];
            let dc_prev = &mut dc_next[l];
            for r in 0..rows {
                for u in 0..units {
                    let k = r * units + u;
                    let dh = dh_from_above[k] + dh_next[l][k];
                    let (i, f, g, o, tc) = (cell.i[k], cell.f[k], cell.g[k], cell.o[k], cell.tanh_c[k]);
                    let d_o = dh * tc;
                    let dc = dh * o * (T::one() - tc * tc) + dc_prev[k];
                    let d_f = dc * cache.c_prev[l][k];
                    let d_i = dc * g;
                    let d_g = dc * i;
                    dc_prev[k] = dc * f;
                    let zr = &mut dz[r * g4..(r + 1) * g4];
                    zr[u] = d_i * i * (T::one() - i);
                    zr[units + u] = d_f * f * (T::one() - f);
                    zr[2 * units + u] = d_g * (T::one() - g * g);
                    zr[3 * units + u] = d_o * o * (T::one() - o);
                }
            }
            let input = layer.w_input.shape[0];
            matmul_at_b_acc(&cache.inputs[l], &dz, &mut lg.w_input.data, rows, input, g4);
            matmul_at_b_acc(&cache.h_prev[l], &dz, &mut lg.w_recurrent.data, rows, units, g4);
            acc_col_sums(&dz, &mut lg.bias.data);
            let mut dh_prev = vec![T::zero(); rows * units];
            matmul_a_bt_acc(&dz, &layer.w_recurrent.data, &mut dh_prev, rows, g4, units);
            dh_next[l] = dh_prev;
            let mut dx = vec![T::zero(); rows * input];
            matmul_a_bt_acc(&dz, &layer.w_input.data, &mut dx, rows, g4, input);
            dh_from_above = dx;
        }
        // dh_from_above now holds the gradient w.r.t. the embedded inputs
        for r in 0..rows {
            let id = batch.at(r, t) as usize;
            let dst = &mut grads.embedding.data[id * e..(id + 1) * e];
            for (d, &s) in dst.iter_mut().zip(&dh_from_above[r * e..(r + 1) * e]) {
                *d = *d + s;
            }
        }
    }

    Ok(LossAndGrads { loss, grads, state })
}

//! Cross-entropy loss over all items and its exact gradient.

use super::model::Model;
use super::Example;
use crate::conditioning::{log_sum_exp, softmax};
use crate::error::{Error, Result};
use crate::matrix::{dot, norm};

/// Gradients laid out like [`Model::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub item_embeddings: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Grads {
    fn zeros_like(model: &Model) -> Self {
        let [e, w1, b1, w2, b2] = model.params();
        Self {
            item_embeddings: vec![0.0; e.len()],
            w1: vec![0.0; w1.len()],
            b1: vec![0.0; b1.len()],
            w2: vec![0.0; w2.len()],
            b2: vec![0.0; b2.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 5] {
        [
            &self.item_embeddings,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn scale(&mut self, k: f64) {
        for v in [
            &mut self.item_embeddings,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ] {
            v.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// Cross-entropy of one logit vector: `-s_y + log Σ exp(s_j)`.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    log_sum_exp(logits) - logits[y]
}

/// Mean loss of `batch` and its gradient with respect to every parameter.
///
/// With `normalize`, logits use unit-length candidate rows and the gradient
/// flows back through the normalization. On a non-finite loss the error
/// carries the offending example's position in `batch`.
pub fn loss_and_grads(model: &Model, batch: &[Example], normalize: bool) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let n = model.num_items();
    let d = model.embed_dim();
    let hidden = model.hidden_dim();
    let emb = &model.item_embeddings;

    let inv_norms: Vec<f64> = emb
        .row_iter()
        .map(|e| {
            let r = norm(e);
            if normalize && r > 0.0 {
                1.0 / r
            } else if normalize {
                0.0
            } else {
                1.0
            }
        })
        .collect();

    let mut grads = Grads::zeros_like(model);
    // gradient with respect to the candidate rows actually used in the logits
    let mut d_cand = vec![0.0; n * d];
    let mut total = 0.0;

    for (idx, ex) in batch.iter().enumerate() {
        let fwd = model.forward(&ex.prefix)?;
        let logits: Vec<f64> = (0..n)
            .map(|i| dot(emb.row(i), &fwd.h) * inv_norms[i])
            .collect();
        let loss = cross_entropy(&logits, ex.target);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                epoch: 0,
                batch: 0,
                example: idx,
                what: format!("loss {loss}"),
            });
        }
        total += loss;

        let mut g = softmax(&logits);
        g[ex.target] -= 1.0;

        let mut dh = vec![0.0; d];
        for i in 0..n {
            let gi = g[i] * inv_norms[i];
            if gi == 0.0 {
                continue;
            }
            let row = emb.row(i);
            let dst = &mut d_cand[i * d..(i + 1) * d];
            for k in 0..d {
                dh[k] += gi * row[k];
                dst[k] += g[i] * fwd.h[k];
            }
        }

        // h = W2 z + b2
        let mut dz = vec![0.0; hidden];
        for k in 0..d {
            grads.b2[k] += dh[k];
            let w2_row = model.w2.row(k);
            let gw2 = &mut grads.w2[k * hidden..(k + 1) * hidden];
            for j in 0..hidden {
                gw2[j] += dh[k] * fwd.hidden[j];
                dz[j] += dh[k] * w2_row[j];
            }
        }
        // z = tanh(W1 mean + b1)
        let mut dmean = vec![0.0; d];
        for j in 0..hidden {
            let da = dz[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
            grads.b1[j] += da;
            let w1_row = model.w1.row(j);
            let gw1 = &mut grads.w1[j * d..(j + 1) * d];
            for k in 0..d {
                gw1[k] += da * fwd.mean[k];
                dmean[k] += da * w1_row[k];
            }
        }
        let t = ex.prefix.len() as f64;
        for &i in &ex.prefix {
            let dst = &mut grads.item_embeddings[i * d..(i + 1) * d];
            for k in 0..d {
                dst[k] += dmean[k] / t;
            }
        }
    }

    // candidate rows back to raw embeddings
    for i in 0..n {
        let dc = &d_cand[i * d..(i + 1) * d];
        let dst = &mut grads.item_embeddings[i * d..(i + 1) * d];
        if normalize {
            let inv = inv_norms[i];
            if inv == 0.0 {
                continue;
            }
            let row = emb.row(i);
            // d(e/|e|) = (I - ê êᵀ) / |e|
            let proj = dot(row, dc) * inv * inv;
            for k in 0..d {
                dst[k] += (dc[k] - proj * row[k]) * inv;
            }
        } else {
            for k in 0..d {
                dst[k] += dc[k];
            }
        }
    }

    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

/// Mean loss only.
pub fn batch_loss(model: &Model, batch: &[Example], normalize: bool) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch {
        let h = model.encode(&ex.prefix)?;
        total += cross_entropy(&model.logits(&h, normalize), ex.target);
    }
    Ok(total / batch.len().max(1) as f64)
}

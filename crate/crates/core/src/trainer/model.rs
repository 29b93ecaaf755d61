use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, EmbeddingMatrix};

/// Item embedding table plus a mean-pool, two-layer tanh encoder:
/// `h = W2 tanh(W1 mean(e_q) + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    /// `num_items x d`
    pub item_embeddings: EmbeddingMatrix,
    /// `hidden x d`
    pub w1: EmbeddingMatrix,
    pub b1: Vec<f64>,
    /// `d x hidden`
    pub w2: EmbeddingMatrix,
    pub b2: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum InitMode {
    /// Copy the given table.
    FromMatrix(EmbeddingMatrix),
    /// Draw `num_items` rows uniformly in `±1/sqrt(d)`.
    Random { num_items: usize },
}

pub fn init_model(mode: InitMode, cfg: &TrainConfig) -> Result<Model> {
    let d = cfg.embed_dim;
    let hidden = cfg.hidden_dim;
    if d == 0 || hidden == 0 {
        return Err(Error::Validation("embed_dim and hidden_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        EmbeddingMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
    };
    let item_embeddings = match mode {
        InitMode::FromMatrix(e) => {
            if e.cols() != d {
                return Err(Error::Dimension(format!(
                    "initial embeddings have {} columns, model dimension is {d}",
                    e.cols()
                )));
            }
            e
        }
        InitMode::Random { num_items } => uniform(num_items, d, d),
    };
    let w1 = uniform(hidden, d, d);
    let w2 = uniform(d, hidden, hidden);
    Ok(Model {
        item_embeddings,
        w1,
        b1: vec![0.0; hidden],
        w2,
        b2: vec![0.0; d],
    })
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub mean: Vec<f64>,
    pub hidden: Vec<f64>,
    pub h: Vec<f64>,
}

impl Model {
    pub fn num_items(&self) -> usize {
        self.item_embeddings.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.item_embeddings.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn forward(&self, seq: &[usize]) -> Result<Forward> {
        if seq.is_empty() {
            return Err(Error::Validation("cannot encode an empty sequence".into()));
        }
        let d = self.embed_dim();
        let mut mean = vec![0.0; d];
        for &i in seq {
            if i >= self.num_items() {
                return Err(Error::Validation(format!("item {i} out of range")));
            }
            for (m, v) in mean.iter_mut().zip(self.item_embeddings.row(i)) {
                *m += v;
            }
        }
        let t = seq.len() as f64;
        mean.iter_mut().for_each(|m| *m /= t);

        let hidden: Vec<f64> = (0..self.hidden_dim())
            .map(|k| (dot(self.w1.row(k), &mean) + self.b1[k]).tanh())
            .collect();
        let h: Vec<f64> = (0..d)
            .map(|k| dot(self.w2.row(k), &hidden) + self.b2[k])
            .collect();
        Ok(Forward { mean, hidden, h })
    }

    /// Sequence representation.
    pub fn encode(&self, seq: &[usize]) -> Result<Vec<f64>> {
        Ok(self.forward(seq)?.h)
    }

    /// Scores of every item: `E h`, or with unit-length candidate rows when
    /// `normalize` is set (zero rows score 0).
    pub fn logits(&self, h: &[f64], normalize: bool) -> Vec<f64> {
        self.item_embeddings
            .row_iter()
            .map(|e| {
                let s = dot(e, h);
                if normalize {
                    let n = norm(e);
                    if n > 0.0 {
                        s / n
                    } else {
                        0.0
                    }
                } else {
                    s
                }
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.item_embeddings.is_finite()
            && self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.item_embeddings.as_mut_slice(),
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn params(&self) -> [&[f64]; 5] {
        [
            self.item_embeddings.as_slice(),
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ]
    }
}

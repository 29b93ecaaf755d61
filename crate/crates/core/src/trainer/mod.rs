//! A small sequential recommender trained with full-softmax cross-entropy.
//!
//! The encoder is deliberately minimal (mean pooling followed by a two-layer
//! tanh network): the quantities of interest live in the item embedding table
//! and in how logits are formed from it, with or without candidate
//! normalization.

mod backprop;
mod checkpoint;
mod metrics;
mod model;

pub use backprop::{batch_loss, cross_entropy, loss_and_grads, Grads};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use metrics::{evaluate, metrics_from_ranks, rank_of, ranks, RankMetrics};
pub use model::{init_model, Forward, InitMode, Model};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{effective_coherence, effective_subspace};
use crate::error::{Error, Result};
use crate::ingest::InteractionLog;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub normalize_candidates: bool,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Training examples sampled once for the per-epoch coherence estimate.
    pub rho_sample: usize,
    /// Effective subspace size for the coherence estimate.
    pub rho_m: usize,
    /// Stop after this many epochs without NDCG@10 improvement; `None` disables.
    pub patience: Option<usize>,
    /// Most recent items kept in a prefix.
    pub max_seq_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 64,
            normalize_candidates: true,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            rho_sample: 512,
            rho_m: 10,
            patience: Some(10),
            max_seq_len: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.max_seq_len == 0 {
            return Err(Error::Validation(
                "epochs, batch_size and max_seq_len must be positive".into(),
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Validation("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// A prefix and the item that followed it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub prefix: Vec<usize>,
    pub target: usize,
}

pub const WINDOWING: &str =
    "leave-one-out: last item of each sequence is the validation target; \
     every earlier position t >= 1 is a training target with the preceding items \
     (at most max_seq_len) as prefix";

/// Split each sequence: the last item becomes a validation example, every
/// earlier item (after the first) a training example.
pub fn split_leave_one_out(log: &InteractionLog, max_len: usize) -> (Vec<Example>, Vec<Example>) {
    let window = |items: &[usize], t: usize| Example {
        prefix: items[t.saturating_sub(max_len)..t].to_vec(),
        target: items[t],
    };
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for s in log.sequences() {
        let len = s.items.len();
        if len < 2 {
            continue;
        }
        for t in 1..len - 1 {
            train.push(window(&s.items, t));
        }
        valid.push(window(&s.items, len - 1));
    }
    (train, valid)
}

/// Adam moments for every parameter.
#[derive(Clone, Debug)]
struct Adam {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &Model) -> Self {
        let zeros = || model.params().iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut Model, grads: &Grads, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = cfg.learning_rate;
        for (t, (param, grad)) in model.params_mut().into_iter().zip(grads.slices()).enumerate() {
            let m = &mut self.first[t];
            let v = &mut self.second[t];
            for k in 0..param.len() {
                let g = grad[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let step = (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.adam_eps);
                param[k] -= lr * (step + cfg.weight_decay * param[k]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub rho: f64,
    pub hr5: f64,
    pub ndcg5: f64,
    pub hr10: f64,
    pub ndcg10: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub windowing: String,
    pub normalize_candidates: bool,
    pub num_train: usize,
    pub num_valid: usize,
    pub rho_m: usize,
    pub rho_examples: usize,
    pub rho_convention: String,
    pub initial_loss: f64,
    pub initial_rho: f64,
    pub stopped_early: bool,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub metadata: TraceMetadata,
    pub records: Vec<EpochRecord>,
}

impl MetricsTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,rho,hr5,ndcg5,hr10,ndcg10\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.loss, r.rho, r.hr5, r.ndcg5, r.hr10, r.ndcg10
            ));
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Mean effective coherence over `examples` under the current model.
pub fn mean_coherence(model: &Model, examples: &[Example], m: usize, normalize: bool) -> Result<f64> {
    let m = m.min(model.num_items());
    if m < 2 || examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let h = model.encode(&ex.prefix)?;
        let logits = model.logits(&h, normalize);
        let sub = effective_subspace(&logits, ex.target, m)?;
        let rows = model.item_embeddings.select_rows(&sub.indices);
        // zero rows have no direction; skip rather than fail mid-training
        if let Ok(rho) = effective_coherence(&rows) {
            total += rho;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Train with Adam and decoupled weight decay, recording loss, coherence and
/// validation metrics after every epoch.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    valid_set: &[Example],
    cfg: &TrainConfig,
) -> Result<MetricsTrace> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("no training examples".into()));
    }
    let normalize = cfg.normalize_candidates;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));

    let rho_examples: Vec<Example> = {
        let mut idx: Vec<usize> = (0..train_set.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(cfg.rho_sample);
        idx.sort_unstable();
        idx.into_iter().map(|i| train_set[i].clone()).collect()
    };

    let initial_loss = batch_loss(model, train_set, normalize)?;
    let initial_rho = mean_coherence(model, &rho_examples, cfg.rho_m, normalize)?;

    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, grads) = loss_and_grads(model, &batch, normalize).map_err(|e| match e {
                Error::NonFinite { example, what, .. } => Error::NonFinite {
                    epoch,
                    batch: b,
                    example: chunk[example],
                    what,
                },
                other => other,
            })?;
            loss_sum += loss * batch.len() as f64;
            adam.update(model, &grads, cfg);
            if !model.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    example: chunk[0],
                    what: "parameters after update".into(),
                });
            }
        }

        let rho = mean_coherence(model, &rho_examples, cfg.rho_m, normalize)?;
        let m = evaluate(model, valid_set, &[5, 10], normalize)?;
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            rho,
            hr5: m[0].hit_rate,
            ndcg5: m[0].ndcg,
            hr10: m[1].hit_rate,
            ndcg10: m[1].ndcg,
        };
        let ndcg10 = rec.ndcg10;
        records.push(rec);

        if ndcg10 > best {
            best = ndcg10;
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }

    Ok(MetricsTrace {
        metadata: TraceMetadata {
            windowing: WINDOWING.to_string(),
            normalize_candidates: normalize,
            num_train: train_set.len(),
            num_valid: valid_set.len(),
            rho_m: cfg.rho_m,
            rho_examples: rho_examples.len(),
            rho_convention: "mean over a fixed sample of training examples of the per-example \
                             maximum absolute cosine within the effective subspace"
                .to_string(),
            initial_loss,
            initial_rho,
            stopped_early,
            best_epoch,
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_interactions;

    #[test]
    fn leave_one_out_windows() {
        let log = parse_interactions("0\t1\t0\n0\t2\t1\n0\t3\t2\n0\t4\t3\n1\t5\t0\n").unwrap();
        let (train, valid) = split_leave_one_out(&log, 2);
        assert_eq!(
            train,
            vec![
                Example { prefix: vec![1], target: 2 },
                Example { prefix: vec![1, 2], target: 3 },
            ]
        );
        assert_eq!(valid, vec![Example { prefix: vec![2, 3], target: 4 }]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn csv_header_and_rows() {
        let trace = MetricsTrace {
            metadata: TraceMetadata {
                windowing: String::new(),
                normalize_candidates: true,
                num_train: 1,
                num_valid: 1,
                rho_m: 2,
                rho_examples: 1,
                rho_convention: String::new(),
                initial_loss: 0.0,
                initial_rho: 0.0,
                stopped_early: false,
                best_epoch: 1,
            },
            records: vec![EpochRecord {
                epoch: 1,
                loss: 2.5,
                rho: 0.25,
                hr5: 1.0,
                ndcg5: 0.5,
                hr10: 1.0,
                ndcg10: 0.5,
            }],
        };
        assert_eq!(
            trace.to_csv(),
            "epoch,loss,rho,hr5,ndcg5,hr10,ndcg10\n1,2.5,0.25,1,0.5,1,0.5\n"
        );
    }
}

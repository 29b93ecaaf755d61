use serde::{Deserialize, Serialize};

use super::model::Model;
use super::Example;
use crate::error::Result;

/// 1-based rank of `target`; items with equal scores rank by smaller id.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let st = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > st || (s == st && j < target))
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub n: usize,
    pub hit_rate: f64,
    pub ndcg: f64,
}

/// HR@N and NDCG@N for each cutoff from a list of 1-based ranks.
pub fn metrics_from_ranks(ranks: &[usize], cutoffs: &[usize]) -> Vec<RankMetrics> {
    let count = ranks.len().max(1) as f64;
    cutoffs
        .iter()
        .map(|&n| {
            let mut hits = 0.0;
            let mut gain = 0.0;
            for &r in ranks {
                if r <= n {
                    hits += 1.0;
                    gain += 1.0 / ((r + 1) as f64).log2();
                }
            }
            RankMetrics {
                n,
                hit_rate: hits / count,
                ndcg: gain / count,
            }
        })
        .collect()
}

pub fn ranks(model: &Model, examples: &[Example], normalize: bool) -> Result<Vec<usize>> {
    let one = |ex: &Example| -> Result<usize> {
        let h = model.encode(&ex.prefix)?;
        Ok(rank_of(&model.logits(&h, normalize), ex.target))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        examples.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        examples.iter().map(one).collect()
    }
}

/// Rank every item for each example and score the held-out target.
pub fn evaluate(
    model: &Model,
    examples: &[Example],
    cutoffs: &[usize],
    normalize: bool,
) -> Result<Vec<RankMetrics>> {
    Ok(metrics_from_ranks(&ranks(model, examples, normalize)?, cutoffs))
}

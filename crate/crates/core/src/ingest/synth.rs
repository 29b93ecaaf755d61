use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{InteractionLog, Sequence};
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;

/// Parameters of the synthetic generator.
///
/// Items are split into contiguous collaborative clusters. Users walk inside
/// one cluster and occasionally jump to another.
///
/// Embeddings stand in for text-derived vectors. The leading coordinates hold
/// a scaled cluster center plus noise; the trailing `distractor_dims` hold a
/// semantic group center drawn independently of the clusters. Each row is
/// then rescaled to length `norm_median * exp(sigma * g)`. By default the
/// trailing block is plain noise; see [`SynthConfig::misaligned`] for a
/// preset whose angular structure disagrees with the interaction graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_items: usize,
    pub num_users: usize,
    pub num_clusters: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    pub embed_dim: usize,
    pub norm_scale_sigma: f64,
    /// Median row norm before the log-normal factor.
    pub norm_median: f64,
    pub distractor_dims: usize,
    pub jump_prob: f64,
    /// Length multiplier of the cluster centers.
    pub center_scale: f64,
    /// Spread of items around their cluster center.
    pub noise_scale: f64,
    /// Standard deviation of the distractor coordinates.
    pub distractor_scale: f64,
    /// Number of semantic groups shaping the distractor coordinates. Group
    /// membership is drawn independently of the collaborative clusters;
    /// zero leaves the distractors as plain noise.
    pub semantic_groups: usize,
    /// Length of the group centers in the distractor coordinates, relative
    /// to `distractor_scale`.
    pub semantic_strength: f64,
    /// Length of an offset shared by every item (embedding anisotropy).
    pub common_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_items: 500,
            num_users: 400,
            num_clusters: 20,
            seq_len_min: 8,
            seq_len_max: 20,
            embed_dim: 64,
            norm_scale_sigma: 1.0,
            norm_median: 1.0,
            distractor_dims: 32,
            jump_prob: 0.1,
            center_scale: 1.0,
            noise_scale: 0.6,
            distractor_scale: 0.35,
            semantic_groups: 0,
            semantic_strength: 0.0,
            common_scale: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Embeddings whose only angular structure is semantic: 100 groups that
    /// ignore the collaborative clusters, no cluster signal, larger magnitude.
    pub fn misaligned() -> Self {
        Self {
            center_scale: 0.0,
            semantic_groups: 100,
            semantic_strength: 3.0,
            norm_median: 20.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.num_items == 0 || self.num_users == 0 {
            return fail("num_items and num_users must be positive".into());
        }
        if self.num_clusters == 0 || self.num_clusters > self.num_items {
            return fail(format!(
                "num_clusters must be in [1, {}], got {}",
                self.num_items, self.num_clusters
            ));
        }
        if self.seq_len_min == 0 || self.seq_len_min > self.seq_len_max {
            return fail(format!(
                "need 1 <= seq_len_min <= seq_len_max, got {}..{}",
                self.seq_len_min, self.seq_len_max
            ));
        }
        if self.embed_dim == 0 || self.distractor_dims > self.embed_dim {
            return fail(format!(
                "distractor_dims ({}) must not exceed embed_dim ({})",
                self.distractor_dims, self.embed_dim
            ));
        }
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return fail(format!("jump_prob must be in [0, 1], got {}", self.jump_prob));
        }
        for (name, v) in [
            ("norm_scale_sigma", self.norm_scale_sigma),
            ("noise_scale", self.noise_scale),
            ("distractor_scale", self.distractor_scale),
            ("center_scale", self.center_scale),
            ("semantic_strength", self.semantic_strength),
            ("common_scale", self.common_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.norm_median.is_finite() && self.norm_median > 0.0) {
            return fail(format!("norm_median must be positive, got {}", self.norm_median));
        }
        Ok(())
    }

    pub fn cluster_of(&self, item: usize) -> usize {
        item * self.num_clusters / self.num_items
    }

    fn cluster_range(&self, c: usize) -> std::ops::Range<usize> {
        // inverse of cluster_of: smallest i with i * k / n >= c
        let start = (c * self.num_items).div_ceil(self.num_clusters);
        let end = ((c + 1) * self.num_items).div_ceil(self.num_clusters);
        start..end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub log: InteractionLog,
    pub embeddings: EmbeddingMatrix,
    /// Collaborative cluster of every item.
    pub clusters: Vec<usize>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clusters: Vec<usize> = (0..cfg.num_items).map(|i| cfg.cluster_of(i)).collect();

    let embeddings = synth_embeddings(cfg, &clusters, &mut rng);

    let mut sequences = Vec::with_capacity(cfg.num_users);
    for user in 0..cfg.num_users {
        let len = rng.gen_range(cfg.seq_len_min..=cfg.seq_len_max);
        let mut cluster = rng.gen_range(0..cfg.num_clusters);
        let mut items = Vec::with_capacity(len);
        let mut current = pick_in(cfg.cluster_range(cluster), None, &mut rng);
        items.push(current);
        while items.len() < len {
            if cfg.num_clusters > 1 && rng.gen_bool(cfg.jump_prob) {
                let other = rng.gen_range(0..cfg.num_clusters - 1);
                cluster = if other >= cluster { other + 1 } else { other };
                current = pick_in(cfg.cluster_range(cluster), None, &mut rng);
            } else {
                current = pick_in(cfg.cluster_range(cluster), Some(current), &mut rng);
            }
            items.push(current);
        }
        sequences.push(Sequence {
            user: user as u64,
            items,
        });
    }
    let log = InteractionLog::new(sequences, cfg.num_items)?;
    Ok(SynthData {
        log,
        embeddings,
        clusters,
    })
}

/// Uniform item of `range`, avoiding `avoid` when the range has room.
fn pick_in(range: std::ops::Range<usize>, avoid: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
    let len = range.len();
    match avoid {
        Some(a) if len > 1 && range.contains(&a) => {
            let k = rng.gen_range(0..len - 1);
            let cand = range.start + k;
            if cand >= a {
                cand + 1
            } else {
                cand
            }
        }
        _ => range.start + rng.gen_range(0..len),
    }
}

fn synth_embeddings(cfg: &SynthConfig, clusters: &[usize], rng: &mut ChaCha8Rng) -> EmbeddingMatrix {
    let main_dims = cfg.embed_dim - cfg.distractor_dims;
    let centers: Vec<Vec<f64>> = (0..cfg.num_clusters)
        .map(|_| (0..main_dims).map(|_| rng.sample(StandardNormal)).collect())
        .collect();

    let common: Vec<f64> = unit_gaussian(main_dims, rng)
        .into_iter()
        .map(|v| v * cfg.common_scale)
        .collect();
    let groups: Vec<Vec<f64>> = (0..cfg.semantic_groups)
        .map(|_| {
            unit_gaussian(cfg.distractor_dims, rng)
                .into_iter()
                .map(|v| v * cfg.semantic_strength * cfg.distractor_scale * (cfg.distractor_dims as f64).sqrt())
                .collect()
        })
        .collect();

    let mut out = EmbeddingMatrix::zeros(cfg.num_items, cfg.embed_dim);
    for (i, &c) in clusters.iter().enumerate() {
        let group = (!groups.is_empty()).then(|| rng.gen_range(0..groups.len()));
        let row = out.row_mut(i);
        for (k, v) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = if k < main_dims {
                cfg.center_scale * centers[c][k] + common[k] + cfg.noise_scale * z
            } else {
                let offset = group.map_or(0.0, |g| groups[g][k - main_dims]);
                offset + cfg.distractor_scale * z
            };
        }
        let n = crate::matrix::norm(row);
        let g: f64 = rng.sample(StandardNormal);
        let scale = if n > 0.0 {
            cfg.norm_median * (cfg.norm_scale_sigma * g).exp() / n
        } else {
            0.0
        };
        row.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = crate::matrix::norm(&v);
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_items: 60,
            num_users: 30,
            num_clusters: 6,
            embed_dim: 12,
            distractor_dims: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_sigma_gives_unit_rows() {
        let cfg = SynthConfig {
            norm_scale_sigma: 0.0,
            ..small()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for n in data.embeddings.row_norms() {
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn positive_sigma_gives_norm_disparity() {
        let data = generate_synthetic(&small()).unwrap();
        assert!(data.embeddings.norm_ratio() > 1.0);
    }

    #[test]
    fn no_jumps_stays_in_one_cluster() {
        let cfg = SynthConfig {
            jump_prob: 0.0,
            ..small()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for s in data.log.sequences() {
            let c = data.clusters[s.items[0]];
            assert!(s.items.iter().all(|&i| data.clusters[i] == c));
        }
    }

    #[test]
    fn semantic_groups_shape_trailing_coordinates() {
        let cfg = SynthConfig {
            semantic_groups: 2,
            semantic_strength: 10.0,
            norm_scale_sigma: 0.0,
            ..small()
        };
        let data = generate_synthetic(&cfg).unwrap();
        // with two strong groups some other item shares item 0's direction
        let tail = |i: usize| data.embeddings.row(i)[8..].to_vec();
        let cos = |a: &[f64], b: &[f64]| {
            crate::matrix::dot(a, b) / (crate::matrix::norm(a) * crate::matrix::norm(b))
        };
        let first = tail(0);
        let same = (1..cfg.num_items).filter(|&i| cos(&first, &tail(i)) > 0.9).count();
        assert!(same > 0);
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 9, ..small() }).unwrap();
        assert_ne!(a.embeddings, c.embeddings);
    }

    #[test]
    fn cluster_ranges_partition_items() {
        let cfg = SynthConfig {
            num_items: 17,
            num_clusters: 5,
            ..small()
        };
        let mut covered = Vec::new();
        for c in 0..cfg.num_clusters {
            for i in cfg.cluster_range(c) {
                assert_eq!(cfg.cluster_of(i), c);
                covered.push(i);
            }
        }
        assert_eq!(covered, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { num_clusters: 61, ..small() }.validate().is_err());
        assert!(SynthConfig { jump_prob: 1.5, ..small() }.validate().is_err());
        assert!(SynthConfig { distractor_dims: 13, ..small() }.validate().is_err());
        assert!(SynthConfig { seq_len_min: 5, seq_len_max: 4, ..small() }.validate().is_err());
        assert!(SynthConfig { norm_median: 0.0, ..small() }.validate().is_err());
        assert!(SynthConfig { semantic_strength: -1.0, ..small() }.validate().is_err());
    }
}

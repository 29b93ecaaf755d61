use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use recpca_core::conditioning::{
    bound_report, effective_coherence, effective_subspace, gershgorin_bound, random_instance,
};
use recpca_core::graph::{
    build_cooccurrence, normalized_laplacian, sparsify_topk, total_variation, CooccurrenceGraph,
};
use recpca_core::ingest::{generate_synthetic, SynthConfig};
use recpca_core::recpca::{chebyshev_scalar, fit_transform, sqrt_apply, RecPcaConfig, TransformMode};
use recpca_core::EmbeddingMatrix;

pub type DemoResult<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub x: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

/// Gershgorin bound over `rho` in `[0, 1/(m-1))`.
pub fn gershgorin_curve(m: usize, points: usize) -> DemoResult<Curve> {
    if m < 2 || points < 2 {
        return Err("need m >= 2 and at least two points".into());
    }
    let limit = 1.0 / (m - 1) as f64;
    // stop short of the pole
    let rho: Vec<f64> = (0..points).map(|k| 0.95 * limit * k as f64 / (points - 1) as f64).collect();
    let bound = rho.iter().map(|&r| gershgorin_bound(m, r).unwrap_or(f64::NAN)).collect();
    Ok(Curve {
        x: rho,
        series: vec![("bound".into(), bound)],
    })
}

#[derive(Debug, Serialize)]
pub struct BoundPoint {
    pub kappa_hh: Option<f64>,
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    pub rho: Option<f64>,
    pub kappa_cos: Option<f64>,
    pub gershgorin: Option<f64>,
    pub all_hold: bool,
}

/// Bounds on `count` random instances with subspace size `m` in `dim` dimensions.
pub fn random_bounds(seed: u64, count: usize, m: usize, dim: usize) -> DemoResult<Vec<BoundPoint>> {
    if m < 2 || dim == 0 {
        return Err("need m >= 2 and dim >= 1".into());
    }
    (0..count as u64)
        .map(|k| {
            let inst = random_instance(seed.wrapping_add(k), m, dim, m + 20).map_err(err)?;
            let r = bound_report(&inst.e_u, &inst.h_su).map_err(err)?;
            Ok(BoundPoint {
                kappa_hh: r.kappa_hh.value(),
                upper: r.bound_upper_norm_disparity.value(),
                lower: r.bound_lower_gram.value(),
                rho: r.rho,
                kappa_cos: r.kappa_cos.value(),
                gershgorin: r.bound_gershgorin.value(),
                all_hold: r.all_hold(),
            })
        })
        .collect()
}

/// `sqrt(1 - alpha + alpha mu)` and its two polynomial surrogates over the
/// spectrum `mu` of `I - L`, which lies in `[-1, 1]`.
pub fn sqrt_curves(alpha: f64, points: usize) -> DemoResult<Curve> {
    recpca_core::recpca::check_alpha(alpha).map_err(err)?;
    if points < 2 {
        return Err("need at least two points".into());
    }
    let mu: Vec<f64> = (0..points).map(|k| -1.0 + 2.0 * k as f64 / (points - 1) as f64).collect();
    let exact = mu.iter().map(|&m| (1.0 - alpha + alpha * m).max(0.0).sqrt()).collect();
    let c1 = mu.iter().map(|&m| chebyshev_scalar(alpha, 1, m)).collect();
    let c2 = mu.iter().map(|&m| chebyshev_scalar(alpha, 2, m)).collect();
    Ok(Curve {
        x: mu,
        series: vec![("exact".into(), exact), ("order 1".into(), c1), ("order 2".into(), c2)],
    })
}

fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, edge_prob: f64) -> DemoResult<CooccurrenceGraph> {
    let mut edges = Vec::new();
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.gen_bool(edge_prob) {
                edges.push((i, j, rng.gen_range(1..6) as f64));
            }
        }
    }
    CooccurrenceGraph::from_edges(nodes, edges).map_err(err)
}

/// Relative Frobenius error of each polynomial filter against the exact
/// square root on a random graph, across alpha.
pub fn graph_errors(seed: u64, nodes: usize, edge_prob: f64) -> DemoResult<Curve> {
    if !(2..=400).contains(&nodes) || !(0.0..=1.0).contains(&edge_prob) {
        return Err("nodes must be in [2, 400] and edge probability in [0, 1]".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(&mut rng, nodes, edge_prob)?;
    let lap = normalized_laplacian(&g);
    let x = EmbeddingMatrix::from_fn(nodes, 8, |_, _| rng.gen_range(-1.0..1.0));
    let alphas: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64 / 20.0).collect();
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    for &a in &alphas {
        let exact = sqrt_apply(&lap, a, TransformMode::Exact, &x).map_err(err)?;
        let scale = exact.frobenius_distance(&EmbeddingMatrix::zeros(nodes, 8)).max(f64::MIN_POSITIVE);
        for (mode, out) in [(TransformMode::Chebyshev1, &mut e1), (TransformMode::Chebyshev2, &mut e2)] {
            let y = sqrt_apply(&lap, a, mode, &x).map_err(err)?;
            out.push(y.frobenius_distance(&exact) / scale);
        }
    }
    Ok(Curve {
        x: alphas,
        series: vec![("order 1".into(), e1), ("order 2".into(), e2)],
    })
}

/// Mean coherence of the effective subspaces seen when each user's last
/// item is scored against the mean of the earlier ones, with normalized
/// candidates.
fn mean_rho(e: &EmbeddingMatrix, sequences: &[Vec<usize>], m: usize) -> DemoResult<f64> {
    let unit = e.normalized_rows().map_err(err)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for items in sequences {
        let Some((&target, prefix)) = items.split_last() else { continue };
        if prefix.is_empty() {
            continue;
        }
        let mut h = vec![0.0; e.cols()];
        for &i in prefix {
            for (a, b) in h.iter_mut().zip(e.row(i)) {
                *a += b / prefix.len() as f64;
            }
        }
        let logits: Vec<f64> = unit.row_iter().map(|r| r.iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
        let sub = effective_subspace(&logits, target, m).map_err(err)?;
        total += effective_coherence(&e.select_rows(&sub.indices)).map_err(err)?;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Debug, Serialize)]
pub struct Sweep {
    pub alpha: Vec<f64>,
    /// Total variation divided by the squared Frobenius norm of `E`.
    pub smoothness: Vec<f64>,
    pub rho: Vec<f64>,
    pub objective: Vec<f64>,
}

/// Rec-PCA on a small synthetic catalogue for a grid of alpha values.
pub fn alpha_sweep(seed: u64, topk: usize, dim: usize) -> DemoResult<Sweep> {
    let cfg = SynthConfig {
        num_items: 150,
        num_users: 200,
        num_clusters: 10,
        embed_dim: 24,
        distractor_dims: 12,
        seed,
        ..SynthConfig::default()
    };
    if dim == 0 || dim > cfg.embed_dim + cfg.distractor_dims {
        return Err(format!("dim must be in [1, {}]", cfg.embed_dim + cfg.distractor_dims));
    }
    let data = generate_synthetic(&cfg).map_err(err)?;
    let g = sparsify_topk(&build_cooccurrence(&data.log), topk).map_err(err)?;
    let lap = normalized_laplacian(&g);
    let sequences: Vec<Vec<usize>> = data.log.sequences().iter().map(|s| s.items.clone()).collect();
    let alpha: Vec<f64> = (0..=10).map(|k| 0.05 * k as f64).collect();
    let mut sweep = Sweep {
        alpha: alpha.clone(),
        smoothness: Vec::new(),
        rho: Vec::new(),
        objective: Vec::new(),
    };
    for a in alpha {
        let (model, e) = fit_transform(&data.embeddings, &lap, &RecPcaConfig::new(a, dim, TransformMode::Exact))
            .map_err(err)?;
        let energy: f64 = e.as_slice().iter().map(|v| v * v).sum();
        sweep.smoothness.push(total_variation(&e, &lap).map_err(err)? / energy.max(f64::MIN_POSITIVE));
        sweep.rho.push(mean_rho(&e, &sequences, 10)?);
        sweep.objective.push(model.objective());
    }
    Ok(sweep)
}

//! Reference implementations used as independent oracles.
//!
//! Everything here works on plain `Vec<Vec<f64>>` and avoids the library's
//! own linear algebra, so agreement is meaningful.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recpca_core::graph::CooccurrenceGraph;
use recpca_core::EmbeddingMatrix;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept separate from rand_distr on purpose
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Dense {
    (0..rows)
        .map(|_| (0..cols).map(|_| gaussian(rng)).collect())
        .collect()
}

pub fn to_matrix(a: &Dense) -> EmbeddingMatrix {
    EmbeddingMatrix::from_rows(a).unwrap()
}

pub fn from_matrix(m: &EmbeddingMatrix) -> Dense {
    m.row_iter().map(|r| r.to_vec()).collect()
}

pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Dense {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn identity(n: usize) -> Dense {
    let mut a = zeros(n, n);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub fn transpose(a: &Dense) -> Dense {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len())
        .map(|j| a.iter().map(|r| r[j]).collect())
        .collect()
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|r| {
            (0..cols)
                .map(|j| (0..inner).map(|k| r[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn add_scaled(a: &Dense, b: &Dense, k: f64) -> Dense {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + k * q).collect())
        .collect()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &Dense) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Dense) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn trace(a: &Dense) -> f64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// Cyclic Jacobi eigensolver. Returns eigenvalues descending and the
/// matching eigenvectors as columns.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut m = a.clone();
    let mut v = identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = (0..n)
        .map(|r| order.iter().map(|&c| v[r][c]).collect())
        .collect();
    (values, vectors)
}

/// Symmetric matrix function `f(A)` through the Jacobi decomposition.
pub fn matrix_function(a: &Dense, f: impl Fn(f64) -> f64) -> Dense {
    let (vals, vecs) = jacobi_eigen(a);
    let n = a.len();
    let mut out = zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let fl = f(lam);
        for i in 0..n {
            for j in 0..n {
                out[i][j] += fl * vecs[i][k] * vecs[j][k];
            }
        }
    }
    out
}

/// Dense normalized Laplacian straight from an edge list.
pub fn dense_laplacian(n: usize, edges: &[(usize, usize, f64)]) -> Dense {
    let mut a = zeros(n, n);
    for &(i, j, w) in edges {
        a[i][j] += w;
        a[j][i] += w;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut l = zeros(n, n);
    for i in 0..n {
        if deg[i] == 0.0 {
            continue;
        }
        l[i][i] = 1.0;
        for j in 0..n {
            if deg[j] > 0.0 && a[i][j] != 0.0 {
                l[i][j] -= a[i][j] / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    l
}

/// Erdős–Rényi graph with positive integer weights.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(p) {
                edges.push((i, j, rng.gen_range(1..6) as f64));
            }
        }
    }
    edges
}

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> (CooccurrenceGraph, Vec<(usize, usize, f64)>) {
    let edges = random_edges(rng, n, p);
    (CooccurrenceGraph::from_edges(n, edges.clone()).unwrap(), edges)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

pub fn param_mut(model: &mut recpca_core::trainer::Model, t: usize) -> &mut [f64] {
    match t {
        0 => model.item_embeddings.as_mut_slice(),
        1 => model.w1.as_mut_slice(),
        2 => &mut model.b1,
        3 => model.w2.as_mut_slice(),
        _ => &mut model.b2,
    }
}

/// Worst relative disagreement between the analytic gradient and central
/// differences with step `h`, over every parameter. Entries where both are
/// below `floor` in magnitude are compared on the `floor` scale.
pub fn gradient_check(
    model: &recpca_core::trainer::Model,
    batch: &[recpca_core::trainer::Example],
    normalize: bool,
    h: f64,
    floor: f64,
) -> (f64, usize) {
    use recpca_core::trainer::{batch_loss, loss_and_grads};
    let (_, grads) = loss_and_grads(model, batch, normalize).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut m = model.clone();
    for (t, g) in grads.slices().iter().enumerate() {
        for k in 0..g.len() {
            let orig = param_mut(&mut m, t)[k];
            param_mut(&mut m, t)[k] = orig + h;
            let up = batch_loss(&m, batch, normalize).unwrap();
            param_mut(&mut m, t)[k] = orig - h;
            let down = batch_loss(&m, batch, normalize).unwrap();
            param_mut(&mut m, t)[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(floor);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

/// 10 items, d = 4, with disparate row norms and a small batch.
pub fn gradient_instance(seed: u64) -> (recpca_core::trainer::Model, Vec<recpca_core::trainer::Example>) {
    use recpca_core::trainer::{init_model, Example, InitMode, TrainConfig};
    let mut r = rng(seed);
    let cfg = TrainConfig {
        embed_dim: 4,
        hidden_dim: 5,
        seed,
        ..TrainConfig::default()
    };
    let e = EmbeddingMatrix::from_fn(10, 4, |_, _| gaussian(&mut r));
    let mut e = e;
    for i in 0..10 {
        let s = (0.8 * gaussian(&mut r)).exp();
        e.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    let mut model = init_model(InitMode::FromMatrix(e), &cfg).unwrap();
    // nonzero biases so their gradients are exercised through tanh
    for b in model.b1.iter_mut().chain(model.b2.iter_mut()) {
        *b = 0.3 * gaussian(&mut r);
    }
    let batch = (0..6)
        .map(|_| {
            let len = r.gen_range(1..5);
            Example {
                prefix: (0..len).map(|_| r.gen_range(0..10)).collect(),
                target: r.gen_range(0..10),
            }
        })
        .collect();
    (model, batch)
}

/// Five evaluation examples with hand-set scores over six items.
///
/// Ranks of the targets, worked out by hand: 1, 2, 6, 3 (tied with item 2,
/// which has the larger id and loses), 5 (tied with item 1, which wins).
pub fn toy_ranking() -> (Vec<Vec<f64>>, Vec<usize>, Vec<usize>) {
    let scores = vec![
        vec![0.9, 0.1, 0.2, 0.3, 0.4, 0.5],
        vec![0.5, 0.9, 0.7, 0.1, 0.0, 0.2],
        vec![0.6, 0.5, 0.4, 0.3, 0.2, 0.1],
        vec![0.8, 0.3, 0.3, 0.1, 0.9, 0.0],
        vec![0.9, 0.4, 0.8, 0.4, 0.7, 0.2],
    ];
    let targets = vec![0, 2, 5, 1, 3];
    let ranks = vec![1, 2, 6, 3, 5];
    (scores, targets, ranks)
}

/// A model whose logits for prefix `[p]` are exactly `scores[p]` up to a
/// common positive factor: identity item rows, `W1 = I`, and `W2` columns
/// holding the scores.
pub fn toy_model(scores: &[Vec<f64>]) -> recpca_core::trainer::Model {
    let n = scores[0].len();
    let t = 1f64.tanh();
    recpca_core::trainer::Model {
        item_embeddings: EmbeddingMatrix::identity(n),
        w1: EmbeddingMatrix::identity(n),
        b1: vec![0.0; n],
        w2: EmbeddingMatrix::from_fn(n, n, |i, p| scores.get(p).map_or(0.0, |s| s[i] / t)),
        b2: vec![0.0; n],
    }
}

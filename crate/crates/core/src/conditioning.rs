//! Loss-geometry diagnostics for softmax cross-entropy over item embeddings.
//!
//! For logits `s = E h` the Hessian of the loss with respect to the sequence
//! representation is `Eᵀ H_s E` with `H_s = Diag(p) - p pᵀ`. Restricted to an
//! effective subspace of `m` items (the positive plus the hardest negatives),
//! its condition number is bracketed by quantities that only depend on the
//! embeddings of those items:
//!
//! * upper: `(beta/alpha) (r_max/r_min)^2 κ(Ê Êᵀ)`
//! * lower: `(alpha/beta) κ(E Eᵀ)`
//! * `κ(Ê Êᵀ) <= (1 + (m-1) ρ) / (1 - (m-1) ρ)` whenever `(m-1) ρ < 1`
//!
//! where `alpha`, `beta` are the extreme eigenvalues of the restricted `H_s`,
//! `r` are row norms, `Ê` has unit rows and `ρ` is the largest absolute cosine
//! between two effective items.
//!
//! `E_U` is `m x d`, so `E Eᵀ` and `H_h = Eᵀ H_s E` have rank at most
//! `min(m, d)`. Condition numbers in a [`ConditioningReport`] are taken over
//! the top `min(m, d)` eigenvalues, i.e. on the span of the effective
//! embeddings, which is where the bounds live. [`condition_number`] is the
//! plain full-spectrum version.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, check_symmetric};
use crate::matrix::{dot, EmbeddingMatrix};

/// Below this fraction of `λ_max` the smallest eigenvalue counts as zero.
pub const SINGULAR_RATIO: f64 = 1e-10;

/// Relative slack allowed when checking a bound.
pub const BOUND_SLACK: f64 = 1e-8;

/// A reported scalar that may be unbounded or undefined for the instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Quantity {
    Value(f64),
    Infinite,
    NotApplicable,
}

impl Quantity {
    pub fn value(self) -> Option<f64> {
        match self {
            Quantity::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Quantity::Infinite)
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Quantity::Value(v) => s.serialize_f64(*v),
            Quantity::Infinite => s.serialize_str("infinite"),
            Quantity::NotApplicable => s.serialize_str("not-applicable"),
        }
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Label(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Quantity::Value(v)),
            Repr::Label(l) if l == "infinite" => Ok(Quantity::Infinite),
            Repr::Label(l) if l == "not-applicable" => Ok(Quantity::NotApplicable),
            Repr::Label(l) => Err(serde::de::Error::custom(format!("unknown label {l:?}"))),
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log Σ exp(s_j)`
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// `Diag(p) - p pᵀ`, the Hessian of cross-entropy with respect to the logits.
pub fn hessian_logits(p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { p[i] } else { 0.0 };
        diag - p[i] * p[j]
    })
}

/// The positive item plus the hardest negatives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveSubspace {
    /// Item ids, positive first.
    pub indices: Vec<usize>,
}

impl EffectiveSubspace {
    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// Rows and columns of `full` belonging to the subspace.
    pub fn restrict(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        let idx = &self.indices;
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| full[(idx[a], idx[b])])
    }

    /// `Diag(p_U) - p_U p_Uᵀ` without materializing the full Hessian.
    pub fn restricted_hessian(&self, p: &[f64]) -> DMatrix<f64> {
        let pu: Vec<f64> = self.indices.iter().map(|&i| p[i]).collect();
        hessian_logits(&pu)
    }
}

/// `{y}` followed by the `m - 1` highest-logit other items (ties to the smaller id).
pub fn effective_subspace(logits: &[f64], y: usize, m: usize) -> Result<EffectiveSubspace> {
    if m < 1 {
        return Err(Error::Validation("effective subspace size must be at least 1".into()));
    }
    if m > logits.len() || y >= logits.len() {
        return Err(Error::Validation(format!(
            "subspace of size {m} with positive {y} over {} items",
            logits.len()
        )));
    }
    let mut others: Vec<usize> = (0..logits.len()).filter(|&i| i != y).collect();
    let by_logit = |a: &usize, b: &usize| logits[*b].total_cmp(&logits[*a]).then(a.cmp(b));
    if m - 1 < others.len() {
        others.select_nth_unstable_by(m - 1, by_logit);
        others.truncate(m - 1);
    }
    others.sort_by(by_logit);
    let mut indices = Vec::with_capacity(m);
    indices.push(y);
    indices.extend(others);
    Ok(EffectiveSubspace { indices })
}

/// Largest absolute cosine similarity between two distinct rows.
pub fn effective_coherence(rows: &EmbeddingMatrix) -> Result<f64> {
    if rows.rows() < 2 {
        return Err(Error::Validation("coherence needs at least two rows".into()));
    }
    let unit = rows.normalized_rows()?;
    let mut rho: f64 = 0.0;
    for i in 0..unit.rows() {
        for j in (i + 1)..unit.rows() {
            rho = rho.max(dot(unit.row(i), unit.row(j)).abs());
        }
    }
    Ok(rho.min(1.0))
}

/// `(1 + (m-1) ρ) / (1 - (m-1) ρ)`, defined when `(m-1) ρ < 1`.
pub fn gershgorin_bound(m: usize, rho: f64) -> Option<f64> {
    let spread = (m.saturating_sub(1)) as f64 * rho;
    (spread < 1.0).then(|| (1.0 + spread) / (1.0 - spread))
}

/// Full-spectrum condition number of a symmetric PSD matrix.
///
/// Returns [`Quantity::Infinite`] when `λ_min < 1e-10 λ_max`; the extreme
/// eigenvalues are returned alongside.
pub fn condition_number(m: &DMatrix<f64>) -> Result<(Quantity, f64, f64)> {
    check_symmetric(m, 1e-9)?;
    let (max, min) = linalg::extreme_eigenvalues(m);
    if !(max > 0.0) {
        return Err(Error::Validation(format!(
            "largest eigenvalue is {max}; condition number undefined"
        )));
    }
    Ok((ratio(max, min), max, min))
}

fn ratio(max: f64, min: f64) -> Quantity {
    if min < SINGULAR_RATIO * max {
        Quantity::Infinite
    } else {
        Quantity::Value((max / min).max(1.0))
    }
}

/// Condition number over the `rank` largest eigenvalues.
fn condition_number_top(m: &DMatrix<f64>, rank: usize) -> Extremes {
    let vals = linalg::sym_eigen(m).values;
    let max = vals[0];
    let min = vals[rank - 1];
    let kappa = if max > 0.0 { ratio(max, min) } else { Quantity::NotApplicable };
    Extremes { max, min, kappa }
}

/// `E_Uᵀ H_sU E_U`, symmetrized.
pub fn hessian_repr(e_u: &EmbeddingMatrix, h_su: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h_su.nrows() != e_u.rows() || h_su.ncols() != e_u.rows() {
        return Err(Error::Dimension(format!(
            "H_s is {}x{} but there are {} effective rows",
            h_su.nrows(),
            h_su.ncols(),
            e_u.rows()
        )));
    }
    let e = e_u.to_dmatrix();
    Ok(linalg::symmetrize(&(e.transpose() * h_su * &e)))
}

/// Extreme eigenvalues used for one condition number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub max: f64,
    pub min: f64,
    pub kappa: Quantity,
}

/// Per-instance diagnostics and bound checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub m: usize,
    pub dim: usize,
    /// `min(m, dim)`: number of eigenvalues the condition numbers range over.
    pub rank: usize,
    pub rho: Option<f64>,
    pub kappa_cos: Quantity,
    pub kappa_gram: Quantity,
    pub kappa_hh: Quantity,
    pub r_max: f64,
    pub r_min: f64,
    /// Smallest eigenvalue of the restricted logit Hessian.
    pub alpha_ns: f64,
    /// Largest eigenvalue of the restricted logit Hessian.
    pub beta_ns: f64,
    /// `(beta/alpha) (r_max/r_min)^2 κ(Ê Êᵀ)`, must dominate `κ(H_h)`.
    pub bound_upper_norm_disparity: Quantity,
    /// `(alpha/beta) κ(E Eᵀ)`, must not exceed `κ(H_h)`.
    pub bound_lower_gram: Quantity,
    /// Gershgorin bound on `κ(Ê Êᵀ)`.
    pub bound_gershgorin: Quantity,
    pub verdict_upper: Option<bool>,
    pub verdict_lower: Option<bool>,
    pub verdict_gershgorin: Option<bool>,
    pub eigen_hs: Extremes,
    pub eigen_hh: Option<Extremes>,
    pub eigen_cos: Option<Extremes>,
    pub eigen_gram: Option<Extremes>,
}

impl ConditioningReport {
    /// True unless some applicable bound was violated.
    pub fn all_hold(&self) -> bool {
        [self.verdict_upper, self.verdict_lower, self.verdict_gershgorin]
            .iter()
            .all(|v| v.unwrap_or(true))
    }
}

fn le_with_slack(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + BOUND_SLACK)
}

/// Compute every diagnostic for one effective subspace and check the bounds.
///
/// `h_su` must already be restricted to the effective items, in the same
/// order as the rows of `e_u`. Degenerate instances (zero rows, a singular
/// `h_su`, rank-deficient embeddings) produce `not-applicable` fields.
pub fn bound_report(e_u: &EmbeddingMatrix, h_su: &DMatrix<f64>) -> Result<ConditioningReport> {
    let m = e_u.rows();
    let dim = e_u.cols();
    if m == 0 || dim == 0 {
        return Err(Error::Dimension("empty effective embedding matrix".into()));
    }
    let h_hu = hessian_repr(e_u, h_su)?;
    let rank = m.min(dim);

    let (beta_ns, alpha_raw) = linalg::extreme_eigenvalues(h_su);
    let hs_definite = beta_ns > 0.0 && alpha_raw > SINGULAR_RATIO * beta_ns;
    let alpha_ns = alpha_raw.max(0.0);
    let eigen_hs = Extremes {
        max: beta_ns,
        min: alpha_raw,
        kappa: if beta_ns > 0.0 { ratio(beta_ns, alpha_raw) } else { Quantity::NotApplicable },
    };

    let norms = e_u.row_norms();
    let r_max = norms.iter().cloned().fold(0.0, f64::max);
    let r_min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let nonzero = r_min > 0.0;

    let eigen_gram = (r_max > 0.0).then(|| condition_number_top(&e_u.outer_gram(), rank));
    let eigen_cos = if nonzero {
        Some(condition_number_top(&e_u.normalized_rows()?.outer_gram(), rank))
    } else {
        None
    };
    let eigen_hh = (r_max > 0.0 && beta_ns > 0.0).then(|| condition_number_top(&h_hu, rank));
    let rho = if nonzero && m >= 2 {
        Some(effective_coherence(e_u)?)
    } else {
        None
    };

    let kappa_of = |e: &Option<Extremes>| e.map_or(Quantity::NotApplicable, |x| x.kappa);
    let kappa_cos = kappa_of(&eigen_cos);
    let kappa_gram = kappa_of(&eigen_gram);
    let kappa_hh = kappa_of(&eigen_hh);

    let (mut bound_upper, mut verdict_upper) = (Quantity::NotApplicable, None);
    let (mut bound_lower, mut verdict_lower) = (Quantity::NotApplicable, None);
    if hs_definite && nonzero {
        if let (Some(kc), Some(kh)) = (kappa_cos.value(), kappa_hh.value()) {
            let b = beta_ns / alpha_ns * (r_max / r_min).powi(2) * kc;
            bound_upper = Quantity::Value(b);
            verdict_upper = Some(le_with_slack(kh, b));
        }
        if let (Some(kg), Some(kh)) = (kappa_gram.value(), kappa_hh.value()) {
            let b = alpha_ns / beta_ns * kg;
            bound_lower = Quantity::Value(b);
            verdict_lower = Some(le_with_slack(b, kh));
        }
    }

    let (mut bound_gershgorin, mut verdict_gershgorin) = (Quantity::NotApplicable, None);
    if let Some(b) = rho.and_then(|r| gershgorin_bound(m, r)) {
        bound_gershgorin = Quantity::Value(b);
        verdict_gershgorin = kappa_cos.value().map(|kc| le_with_slack(kc, b));
    }

    Ok(ConditioningReport {
        m,
        dim,
        rank,
        rho,
        kappa_cos,
        kappa_gram,
        kappa_hh,
        r_max,
        r_min,
        alpha_ns,
        beta_ns,
        bound_upper_norm_disparity: bound_upper,
        bound_lower_gram: bound_lower,
        bound_gershgorin,
        verdict_upper,
        verdict_lower,
        verdict_gershgorin,
        eigen_hs,
        eigen_hh,
        eigen_cos,
        eigen_gram,
    })
}

/// Reports for many instances; runs in parallel when the `parallel` feature is on.
pub fn bound_reports(
    instances: &[(EmbeddingMatrix, DMatrix<f64>)],
) -> Result<Vec<ConditioningReport>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        instances
            .par_iter()
            .map(|(e, h)| bound_report(e, h))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        instances.iter().map(|(e, h)| bound_report(e, h)).collect()
    }
}

/// A random diagnostic instance: Gaussian embeddings with log-normal row
/// norms for `num_items` items, random logits, and the effective subspace of
/// size `m` around a random positive.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub e_u: EmbeddingMatrix,
    pub h_su: DMatrix<f64>,
    pub subspace: EffectiveSubspace,
}

pub fn random_instance(seed: u64, m: usize, dim: usize, num_items: usize) -> Result<RandomInstance> {
    if num_items < m || m == 0 {
        return Err(Error::Validation(format!(
            "need 1 <= m <= num_items, got m={m}, num_items={num_items}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logit_scale: f64 = rng.gen_range(0.2..3.0);
    let logits: Vec<f64> = (0..num_items)
        .map(|_| logit_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y = rng.gen_range(0..num_items);
    let subspace = effective_subspace(&logits, y, m)?;
    let p = softmax(&logits);
    let h_su = subspace.restricted_hessian(&p);
    let norm_sigma: f64 = rng.gen_range(0.0..1.0);
    let e_u = EmbeddingMatrix::from_fn(m, dim, |_, _| rng.sample(StandardNormal));
    let mut e_u = e_u;
    for i in 0..m {
        let scale = (norm_sigma * rng.sample::<f64, _>(StandardNormal)).exp();
        e_u.row_mut(i).iter_mut().for_each(|v| *v *= scale);
    }
    Ok(RandomInstance { e_u, h_su, subspace })
}

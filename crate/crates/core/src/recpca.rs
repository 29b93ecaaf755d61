//! Graph-regularized, uncentered PCA.
//!
//! The projection maximizes retained energy minus `alpha` times graph total
//! variation, `tr(Pᵀ Xᵀ (I - alpha L) X P)` over orthonormal `P`. The optimum
//! is spanned by the top eigenvectors of `S = Xᵀ (I - alpha L) X`, and the
//! reduced data `E = (I - alpha L)^{1/2} X P` has a diagonal Gram matrix
//! holding those eigenvalues.
//!
//! The square root is applied either exactly, through an eigendecomposition of
//! the Laplacian, or through a first or second order polynomial in the
//! normalized adjacency `I - L` that only needs sparse products.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::linalg::{self, sym_eigen};
use crate::matrix::EmbeddingMatrix;

/// Largest graph for which the exact square root is attempted.
pub const EXACT_MAX_NODES: usize = 2000;

/// Upper limit on `alpha`; keeps `I - alpha L` positive semidefinite.
pub const ALPHA_MAX: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    Exact,
    #[serde(rename = "cheb1")]
    Chebyshev1,
    #[serde(rename = "cheb2")]
    Chebyshev2,
}

impl std::str::FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "cheb1" | "chebyshev1" => Ok(Self::Chebyshev1),
            "cheb2" | "chebyshev2" => Ok(Self::Chebyshev2),
            other => Err(Error::Validation(format!(
                "unknown transform mode {other:?} (expected exact, cheb1 or cheb2)"
            ))),
        }
    }
}

impl std::fmt::Display for TransformMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::Chebyshev1 => "cheb1",
            Self::Chebyshev2 => "cheb2",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecPcaConfig {
    pub alpha: f64,
    pub out_dim: usize,
    pub mode: TransformMode,
    /// Subtract column means before fitting. Off by default: the objective
    /// is defined on raw embeddings.
    #[serde(default)]
    pub center: bool,
}

impl RecPcaConfig {
    pub fn new(alpha: f64, out_dim: usize, mode: TransformMode) -> Self {
        Self {
            alpha,
            out_dim,
            mode,
            center: false,
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=ALPHA_MAX).contains(&alpha) {
        return Err(Error::Validation(format!(
            "alpha must lie in [0, {ALPHA_MAX}] so that I - alpha*L has a principal square root, got {alpha}"
        )));
    }
    Ok(())
}

/// `S = Xᵀ (I - alpha L) X`, symmetrized as `(S + Sᵀ) / 2`.
pub fn objective_matrix(x: &EmbeddingMatrix, lap: &Laplacian, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    lap.check_rows(x)?;
    let xd = x.to_dmatrix();
    let s = if alpha == 0.0 {
        xd.transpose() * &xd
    } else {
        let lx = lap.apply_rows(x)?.to_dmatrix();
        let filtered = &xd - lx * alpha;
        xd.transpose() * filtered
    };
    Ok(linalg::symmetrize(&s))
}

/// Top-`d` eigenpairs of a symmetric matrix, eigenvalues descending, each
/// column signed so its largest-magnitude entry is positive.
pub fn top_eigenvectors(s: &DMatrix<f64>, d: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    linalg::check_symmetric(s, 1e-9)?;
    if d == 0 || d > s.nrows() {
        return Err(Error::Dimension(format!(
            "cannot take {d} eigenvectors of a {0}x{0} matrix",
            s.nrows()
        )));
    }
    let eig = sym_eigen(s);
    let vectors = eig.vectors.columns(0, d).into_owned();
    Ok((vectors, eig.values[..d].to_vec()))
}

/// `(I - alpha L)^{1/2} X` through a full eigendecomposition of the
/// Laplacian restricted to its non-isolated nodes. Rows of isolated nodes are
/// copied unchanged.
pub fn sqrt_apply_exact(lap: &Laplacian, alpha: f64, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    check_alpha(alpha)?;
    lap.check_rows(x)?;
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    let active: Vec<usize> = (0..lap.num_nodes())
        .filter(|&i| !lap.isolated_mask()[i])
        .collect();
    if active.is_empty() {
        return Ok(x.clone());
    }
    if lap.num_nodes() > EXACT_MAX_NODES {
        return Err(Error::TooLargeForExact {
            nodes: lap.num_nodes(),
            limit: EXACT_MAX_NODES,
        });
    }
    let factor = sqrt_factor_dense(lap, alpha, &active);
    let sub = x.select_rows(&active).to_dmatrix();
    let mapped = factor * sub;
    let mut out = x.clone();
    for (r, &i) in active.iter().enumerate() {
        for (c, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = mapped[(r, c)];
        }
    }
    Ok(out)
}

/// Dense `(I - alpha L)^{1/2}` on the given node subset.
fn sqrt_factor_dense(lap: &Laplacian, alpha: f64, active: &[usize]) -> DMatrix<f64> {
    let mut pos = vec![usize::MAX; lap.num_nodes()];
    for (k, &i) in active.iter().enumerate() {
        pos[i] = k;
    }
    let n = active.len();
    let mut l = DMatrix::zeros(n, n);
    for (r, &i) in active.iter().enumerate() {
        for (j, v) in lap.row(i) {
            l[(r, pos[j])] = v;
        }
    }
    let eig = sym_eigen(&l);
    // at alpha = 0.5 a bipartite component gives 1 - alpha*lambda = 0 up to
    // roundoff; the square root would magnify that to ~1e-8, so snap it
    let floor = 64.0 * f64::EPSILON;
    let roots: Vec<f64> = eig
        .values
        .iter()
        .map(|&lam| {
            let v = 1.0 - alpha * lam;
            if v < floor {
                0.0
            } else {
                v.sqrt()
            }
        })
        .collect();
    let v = &eig.vectors;
    let mut scaled = v.clone();
    for (k, r) in roots.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*r);
    }
    scaled * v.transpose()
}

/// Polynomial coefficients `(c0, c1, c2)` such that
/// `(I - alpha L)^{1/2} ≈ c0 I + c1 (I - L) - c2 (I - L)^2`.
pub fn chebyshev_coefficients(alpha: f64, order: usize) -> (f64, f64, f64) {
    let root = (1.0 - alpha).sqrt();
    let c1 = alpha / (2.0 * root);
    let c2 = if order >= 2 {
        alpha * alpha / (8.0 * (1.0 - alpha).powf(1.5))
    } else {
        0.0
    };
    (root, c1, c2)
}

/// Scalar form of the polynomial approximation at an eigenvalue `mu` of `I - L`.
pub fn chebyshev_scalar(alpha: f64, order: usize, mu: f64) -> f64 {
    let (c0, c1, c2) = chebyshev_coefficients(alpha, order);
    c0 + c1 * mu - c2 * mu * mu
}

/// Approximate `(I - alpha L)^{1/2} X` with the first or second order
/// polynomial in `I - L`, using sparse products only.
pub fn sqrt_apply_chebyshev(
    lap: &Laplacian,
    alpha: f64,
    order: usize,
    x: &EmbeddingMatrix,
) -> Result<EmbeddingMatrix> {
    check_alpha(alpha)?;
    lap.check_rows(x)?;
    if !(1..=2).contains(&order) {
        return Err(Error::Validation(format!(
            "approximation order must be 1 or 2, got {order}"
        )));
    }
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    let (c0, c1, c2) = chebyshev_coefficients(alpha, order);
    let ax = lap.apply_normalized_adjacency(x)?;
    let mut out = x.clone();
    for (o, a) in out.as_mut_slice().iter_mut().zip(ax.as_slice()) {
        *o = c0 * *o + c1 * a;
    }
    if order == 2 {
        let aax = lap.apply_normalized_adjacency(&ax)?;
        for (o, a) in out.as_mut_slice().iter_mut().zip(aax.as_slice()) {
            *o -= c2 * a;
        }
    }
    Ok(out)
}

pub fn sqrt_apply(
    lap: &Laplacian,
    alpha: f64,
    mode: TransformMode,
    x: &EmbeddingMatrix,
) -> Result<EmbeddingMatrix> {
    match mode {
        TransformMode::Exact => sqrt_apply_exact(lap, alpha, x),
        TransformMode::Chebyshev1 => sqrt_apply_chebyshev(lap, alpha, 1, x),
        TransformMode::Chebyshev2 => sqrt_apply_chebyshev(lap, alpha, 2, x),
    }
}

/// A fitted projection.
#[derive(Clone, Debug)]
pub struct RecPcaModel {
    /// `d_in x d` with orthonormal columns.
    pub projection: DMatrix<f64>,
    /// Top `d` eigenvalues of the objective matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub config: RecPcaConfig,
    /// Column means removed before fitting, when centering is on.
    pub mean: Option<Vec<f64>>,
}

/// JSON sidecar stored next to the projection matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub alpha: f64,
    pub d: usize,
    pub mode: TransformMode,
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub center: bool,
}

impl RecPcaModel {
    /// Objective value `tr(P*ᵀ S P*)`, the sum of retained eigenvalues.
    pub fn objective(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn sidecar(&self) -> ModelSidecar {
        ModelSidecar {
            alpha: self.config.alpha,
            d: self.config.out_dim,
            mode: self.config.mode,
            eigenvalues: self.eigenvalues.clone(),
            center: self.config.center,
        }
    }

    pub fn projection_matrix(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::from_dmatrix(&self.projection)
    }

    /// `sqrt_apply(X) P*` using the model's mode and alpha.
    pub fn transform(&self, x: &EmbeddingMatrix, lap: &Laplacian) -> Result<EmbeddingMatrix> {
        let x = match &self.mean {
            Some(mean) => center_with(x, mean),
            None => x.clone(),
        };
        let filtered = sqrt_apply(lap, self.config.alpha, self.config.mode, &x)?;
        filtered.matmul(&self.projection)
    }
}

fn column_means(x: &EmbeddingMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = x.rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn center_with(x: &EmbeddingMatrix, mean: &[f64]) -> EmbeddingMatrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, m) in out.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    out
}

/// Fit the projection on `x` and return it with the reduced embeddings.
pub fn fit_transform(
    x: &EmbeddingMatrix,
    lap: &Laplacian,
    cfg: &RecPcaConfig,
) -> Result<(RecPcaModel, EmbeddingMatrix)> {
    check_alpha(cfg.alpha)?;
    if cfg.out_dim == 0 || cfg.out_dim > x.cols() {
        return Err(Error::Dimension(format!(
            "output dimension {} must be in [1, {}]",
            cfg.out_dim,
            x.cols()
        )));
    }
    let mean = cfg.center.then(|| column_means(x));
    let xc = match &mean {
        Some(m) => center_with(x, m),
        None => x.clone(),
    };
    let s = objective_matrix(&xc, lap, cfg.alpha)?;
    let (projection, eigenvalues) = top_eigenvectors(&s, cfg.out_dim)?;
    let filtered = sqrt_apply(lap, cfg.alpha, cfg.mode, &xc)?;
    let e = filtered.matmul(&projection)?;
    let model = RecPcaModel {
        projection,
        eigenvalues,
        config: cfg.clone(),
        mean,
    };
    Ok((model, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_laplacian, CooccurrenceGraph};

    fn edge_lap() -> Laplacian {
        normalized_laplacian(&CooccurrenceGraph::from_edges(2, [(0, 1, 1.0)]).unwrap())
    }

    #[test]
    fn alpha_bounds() {
        assert!(check_alpha(0.0).is_ok());
        assert!(check_alpha(0.5).is_ok());
        assert!(check_alpha(0.7).is_err());
        assert!(check_alpha(-0.1).is_err());
        assert!(check_alpha(f64::NAN).is_err());
    }

    #[test]
    fn objective_at_zero_alpha_is_gram() {
        let x = EmbeddingMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 - 1.5);
        let s = objective_matrix(&x, &edge_lap(), 0.0).unwrap();
        assert_eq!(s, x.gram());
    }

    #[test]
    fn objective_with_identity_data() {
        let lap = edge_lap();
        let s = objective_matrix(&EmbeddingMatrix::identity(2), &lap, 0.3).unwrap();
        let expected = DMatrix::identity(2, 2) - lap.to_dense() * 0.3;
        assert!((s - expected).amax() < 1e-15);
    }

    #[test]
    fn diagonal_eigenvectors() {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let (p, vals) = top_eigenvectors(&s, 2).unwrap();
        assert_eq!(vals, vec![3.0, 2.0]);
        assert_eq!(p.column(0).as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(p.column(1).as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_eigenvectors_are_orthonormal() {
        let (p, vals) = top_eigenvectors(&DMatrix::identity(2, 2), 2).unwrap();
        assert_eq!(vals, vec![1.0, 1.0]);
        assert!((p.transpose() * &p - DMatrix::identity(2, 2)).amax() < 1e-15);
        for c in 0..2 {
            let col = p.column(c);
            let big = col.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn eigenvectors_reject_bad_input() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(top_eigenvectors(&asym, 1).is_err());
        assert!(top_eigenvectors(&DMatrix::identity(2, 2), 3).is_err());
    }

    #[test]
    fn exact_sqrt_trivial_cases() {
        let x = EmbeddingMatrix::from_fn(3, 2, |i, j| (i as f64 - j as f64) * 0.7);
        let edgeless = normalized_laplacian(&CooccurrenceGraph::empty(3));
        assert_eq!(sqrt_apply_exact(&edgeless, 0.5, &x).unwrap(), x);
        let path = normalized_laplacian(&CooccurrenceGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap());
        assert_eq!(sqrt_apply_exact(&path, 0.0, &x).unwrap(), x);
    }

    #[test]
    fn exact_sqrt_squares_back() {
        let lap = edge_lap();
        let f = sqrt_apply_exact(&lap, 0.5, &EmbeddingMatrix::identity(2)).unwrap().to_dmatrix();
        let target = DMatrix::identity(2, 2) - lap.to_dense() * 0.5;
        assert!((&f * &f - target).amax() < 1e-10);
        // eigenvalue 2 of L maps to sqrt(0): the factor is the projector onto (1, 1)
        assert!((f - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-10);
    }

    #[test]
    fn chebyshev_on_edgeless_graph_scales_by_constant() {
        let x = EmbeddingMatrix::from_fn(3, 2, |i, j| 1.0 + i as f64 + 0.5 * j as f64);
        let lap = normalized_laplacian(&CooccurrenceGraph::empty(3));
        let y = sqrt_apply_chebyshev(&lap, 0.5, 1, &x).unwrap();
        let factor = 0.5f64.sqrt() + 0.5 / (2.0 * 0.5f64.sqrt());
        assert!((factor - 1.060660171779821).abs() < 1e-12);
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((a - factor * b).abs() < 1e-12);
        }
        assert_eq!(sqrt_apply_exact(&lap, 0.5, &x).unwrap(), x);
    }

    #[test]
    fn chebyshev_at_zero_alpha_is_identity() {
        let x = EmbeddingMatrix::from_fn(2, 2, |i, j| (i * 2 + j) as f64 - 0.3);
        for order in [1, 2] {
            assert_eq!(sqrt_apply_chebyshev(&edge_lap(), 0.0, order, &x).unwrap(), x);
        }
        assert!(sqrt_apply_chebyshev(&edge_lap(), 0.2, 3, &x).is_err());
    }

    #[test]
    fn too_large_for_exact() {
        let n = EXACT_MAX_NODES + 1;
        let g = CooccurrenceGraph::from_edges(n, (0..n - 1).map(|i| (i, i + 1, 1.0))).unwrap();
        let lap = normalized_laplacian(&g);
        let err = sqrt_apply_exact(&lap, 0.3, &EmbeddingMatrix::zeros(n, 1)).unwrap_err();
        assert!(err.to_string().contains("Chebyshev"));
        assert!(sqrt_apply_chebyshev(&lap, 0.3, 2, &EmbeddingMatrix::zeros(n, 1)).is_ok());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("cheb2".parse::<TransformMode>().unwrap(), TransformMode::Chebyshev2);
        assert!("svd".parse::<TransformMode>().is_err());
        assert_eq!(serde_json::to_string(&TransformMode::Chebyshev1).unwrap(), "\"cheb1\"");
    }

    #[test]
    fn fit_rejects_bad_dimension() {
        let x = EmbeddingMatrix::identity(2);
        assert!(fit_transform(&x, &edge_lap(), &RecPcaConfig::new(0.1, 3, TransformMode::Exact)).is_err());
        assert!(fit_transform(&x, &edge_lap(), &RecPcaConfig::new(0.1, 0, TransformMode::Exact)).is_err());
    }
}

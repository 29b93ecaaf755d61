//! Dense symmetric eigendecomposition helpers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
///
/// Each eigenvector column is signed so that its entry of largest absolute
/// value is positive (first such index on ties).
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Fails unless `m` is square and symmetric to within `tol` (absolute,
/// scaled by the largest entry when that exceeds one).
pub fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > tol * scale {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (max |m_ij - m_ji| = {asym:e})"
        )));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    if n == 0 {
        return SymEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    let (diag, basis) = polish(&sym, eig.eigenvectors);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]));

    let values = order.iter().map(|&k| diag[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = basis.column(src).into_owned();
        apply_sign_convention(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    SymEigen { values, vectors }
}

/// Jacobi sweeps on `Vᵀ M V`, which is already nearly diagonal.
///
/// The QR-based solver occasionally leaves residuals around 1e-11 on
/// matrices with zero blocks; a sweep or two brings them to roundoff.
fn polish(m: &DMatrix<f64>, mut v: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut b = symmetrize(&(v.transpose() * m * &v));
    // roundoff in forming Vᵀ M V is about sqrt(n) eps |M|; rotate only above it
    let tol = 4.0 * (n as f64).sqrt() * f64::EPSILON * b.amax().max(f64::MIN_POSITIVE);
    for _ in 0..8 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let bpq = b[(p, q)];
                if bpq.abs() <= tol {
                    continue;
                }
                rotated = true;
                let theta = (b[(q, q)] - b[(p, p)]) / (2.0 * bpq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (bkp, bkq) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = c * bkp - s * bkq;
                    b[(k, q)] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let (bpk, bqk) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = c * bpk - s * bqk;
                    b[(q, k)] = s * bpk + c * bqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    ((0..n).map(|i| b[(i, i)]).collect(), v)
}

/// Flip `v` so that its largest-magnitude entry is positive.
pub fn apply_sign_convention(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Extreme eigenvalues `(max, min)` of a symmetric matrix.
pub fn extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let vals = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    (max, min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_descending_with_signs() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = sym_eigen(&m);
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors.column(0)[1], 1.0);
        assert_eq!(e.vectors.column(1)[2], 1.0);
    }

    #[test]
    fn sign_convention_ties_take_first_index() {
        let mut v = vec![-0.5, 0.5, 0.1];
        apply_sign_convention(&mut v);
        assert_eq!(v, vec![0.5, -0.5, -0.1]);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(check_symmetric(&m, 1e-9).is_err());
        assert!(check_symmetric(&DMatrix::<f64>::zeros(2, 3), 1e-9).is_err());
    }
}

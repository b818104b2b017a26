use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

/// Eigendecomposition of a symmetric matrix: `M = Q diag(λ) Q^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymEig<S> {
    /// Ascending.
    pub eigenvalues: Vec<S>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix<S>,
}

impl<S: Scalar> SymEig<S> {
    pub fn min(&self) -> S {
        self.eigenvalues.first().copied().unwrap_or_else(S::infinity)
    }

    pub fn max(&self) -> S {
        self.eigenvalues.last().copied().unwrap_or_else(S::neg_infinity)
    }

    pub fn vector(&self, k: usize) -> Vec<S> {
        let n = self.eigenvectors.rows();
        (0..n).map(|i| self.eigenvectors[(i, k)]).collect()
    }

    pub fn reconstruct(&self) -> Matrix<S> {
        let q = &self.eigenvectors;
        let scaled = {
            let mut s = q.clone();
            for j in 0..q.cols() {
                for i in 0..q.rows() {
                    s[(i, j)] = s[(i, j)] * self.eigenvalues[j];
                }
            }
            s
        };
        &scaled * &q.transpose()
    }
}

/// `||M - M^T||_F / ||M||_F` (zero for the zero matrix).
pub fn asymmetry<S: Scalar>(m: &Matrix<S>) -> S {
    let norm = m.norm_fro();
    if norm == S::zero() {
        return S::zero();
    }
    (m - &m.transpose()).norm_fro() / norm
}

pub fn sym_eig<S: Scalar>(m: &Matrix<S>) -> Result<SymEig<S>> {
    sym_eig_with(m, &Tolerances::standard())
}

/// Cyclic Jacobi eigendecomposition. The input is symmetrised before the
/// sweeps; asymmetry beyond `tol.symmetry` is rejected.
pub fn sym_eig_with<S: Scalar>(m: &Matrix<S>, tol: &Tolerances) -> Result<SymEig<S>> {
    let n = m.require_square()?;
    if !m.is_finite() {
        return Err(Error::NonFinite("symmetric eigenproblem"));
    }
    let asym = asymmetry(m);
    if asym.as_f64() > tol.symmetry {
        return Err(Error::NotSymmetric {
            asymmetry: asym.as_f64(),
        });
    }
    let mut a = m.symmetric_part();
    let mut v = Matrix::identity(n);
    let total = a.norm_fro();
    let stop = S::lit(tol.jacobi_offdiag.max(S::EPS)) * total;

    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<S>()
            .sqrt();
        if off <= stop || off == S::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == S::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (S::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = S::zero();
                a[(q, p)] = S::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, k)] = v[(r, i)];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue of the unit-diagonal congruence `D^{-1/2} M D^{-1/2}`.
///
/// Positive definiteness is invariant under this scaling, and the scaled
/// matrix has a norm of order one, so the result is a dimensionless margin
/// that stays meaningful when the entries of `M` span many decades. A
/// non-positive diagonal entry means `M` is not positive definite; the
/// returned value is then that entry divided by the largest diagonal
/// magnitude (never positive).
pub fn equilibrated_min_eig<S: Scalar>(m: &Matrix<S>) -> Result<S> {
    let n = m.require_square()?;
    if n == 0 {
        return Ok(S::infinity());
    }
    let diag: Vec<S> = (0..n).map(|i| m[(i, i)]).collect();
    let dmax = diag.iter().map(|d| d.abs()).fold(S::zero(), S::max);
    if let Some(&bad) = diag.iter().find(|&&d| d <= S::zero()) {
        return Ok(if dmax > S::zero() { bad / dmax } else { S::zero() });
    }
    let inv_sqrt: Vec<S> = diag.iter().map(|d| S::one() / d.sqrt()).collect();
    let mut scaled = m.symmetric_part();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] = scaled[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(sym_eig(&scaled)?.min())
}

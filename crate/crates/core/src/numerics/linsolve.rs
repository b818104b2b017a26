use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

/// LU factorisation with partial pivoting, `P M = L U`, packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu<S> {
    lu: Matrix<S>,
    perm: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    pub fn new(m: &Matrix<S>) -> Result<Self> {
        Self::with_tolerances(m, &Tolerances::standard())
    }

    pub fn with_tolerances(m: &Matrix<S>, tol: &Tolerances) -> Result<Self> {
        let n = m.require_square()?;
        if !m.is_finite() {
            return Err(Error::NonFinite("linear system matrix"));
        }
        let threshold = S::lit(tol.singular_pivot) * m.norm_inf();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, S::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= threshold || pmax == S::zero() {
                return Err(Error::SingularMatrix {
                    pivot: pmax.as_f64(),
                    column: k,
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != S::zero() {
                    for j in (k + 1)..n {
                        lu[(i, j)] = lu[(i, j)] - factor * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, rhs: &Matrix<S>) -> Result<Matrix<S>> {
        let n = self.dim();
        if rhs.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, system has {n}",
                rhs.rows()
            )));
        }
        let k = rhs.cols();
        let mut x = Matrix::zeros(n, k);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..k {
                x[(i, j)] = rhs[(p, j)];
            }
        }
        for j in 0..k {
            for i in 0..n {
                let mut acc = x[(i, j)];
                for l in 0..i {
                    acc = acc - self.lu[(i, l)] * x[(l, j)];
                }
                x[(i, j)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, j)];
                for l in (i + 1)..n {
                    acc = acc - self.lu[(i, l)] * x[(l, j)];
                }
                x[(i, j)] = acc / self.lu[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn determinant(&self) -> S {
        let n = self.dim();
        let mut det = (0..n).map(|i| self.lu[(i, i)]).fold(S::one(), |a, b| a * b);
        // parity of the permutation
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !seen[i] {
                seen[i] = true;
                i = self.perm[i];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

/// Solves `M X = rhs` by LU with partial pivoting.
pub fn solve<S: Scalar>(m: &Matrix<S>, rhs: &Matrix<S>) -> Result<Matrix<S>> {
    Lu::new(m)?.solve(rhs)
}

pub fn inverse<S: Scalar>(m: &Matrix<S>) -> Result<Matrix<S>> {
    let n = m.require_square()?;
    Lu::new(m)?.solve(&Matrix::identity(n))
}

pub fn determinant<S: Scalar>(m: &Matrix<S>) -> Result<S> {
    let n = m.require_square()?;
    if n == 0 {
        return Ok(S::one());
    }
    match Lu::new(m) {
        Ok(lu) => Ok(lu.determinant()),
        Err(Error::SingularMatrix { .. }) => Ok(S::zero()),
        Err(e) => Err(e),
    }
}

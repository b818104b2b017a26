//! Diagonal similarity scaling of `(A, B, C)`.
//!
//! Osborne iteration on the augmented matrix `[[A, B], [C, 0]]` with the
//! input/output index held fixed. With `x = D z` the scaled system is
//! `A' = D^{-1} A D`, `B' = D^{-1} B`, `C' = C D`; a quadratic form `x^T H x`
//! becomes `z^T (D H D) z`, and a Gramian-like `P` maps as `P = D P' D`.

use crate::numerics::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced<S: Scalar> {
    pub a: Matrix<S>,
    pub b: Matrix<S>,
    pub c: Matrix<S>,
    /// Diagonal of `D`.
    pub d: Vec<S>,
}

impl<S: Scalar> Balanced<S> {
    pub fn d_matrix(&self) -> Matrix<S> {
        Matrix::from_diag(&self.d)
    }

    /// `H = D^{-1} H' D^{-1}`.
    pub fn form_to_original(&self, h: &Matrix<S>) -> Matrix<S> {
        let n = self.d.len();
        let mut out = h.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = h[(i, j)] / (self.d[i] * self.d[j]);
            }
        }
        out
    }

    /// `P = D P' D`.
    pub fn gramian_to_original(&self, p: &Matrix<S>) -> Matrix<S> {
        let n = self.d.len();
        let mut out = p.clone();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = p[(i, j)] * self.d[i] * self.d[j];
            }
        }
        out
    }
}

/// Balances row and column norms to within a factor of two.
pub fn balance<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>, c: &Matrix<S>) -> Balanced<S> {
    let n = a.rows();
    let mut d = vec![S::one(); n];
    let entry = |i: usize, j: usize, d: &[S]| -> S {
        // augmented entry (i, j) of D^{-1} M D, index n is the fixed one
        let (di, dj) = (if i < n { d[i] } else { S::one() }, if j < n { d[j] } else { S::one() });
        let m = match (i < n, j < n) {
            (true, true) => a[(i, j)],
            (true, false) => b[(i, 0)],
            (false, true) => c[(0, j)],
            (false, false) => S::zero(),
        };
        m.abs() * dj / di
    };
    let two = S::lit(2.0);
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let row: S = (0..=n).filter(|&j| j != i).map(|j| entry(i, j, &d)).sum();
            let col: S = (0..=n).filter(|&j| j != i).map(|j| entry(j, i, &d)).sum();
            if row == S::zero() || col == S::zero() {
                continue;
            }
            // power-of-two factor so the scaling is exact in floating point
            let mut f = S::one();
            let (mut r, mut cc) = (row, col);
            while cc < r / two {
                cc = cc * two;
                r = r / two;
                f = f * two;
            }
            while cc >= r * two {
                cc = cc / two;
                r = r * two;
                f = f / two;
            }
            if (cc + r) < S::lit(0.95) * (row + col) {
                d[i] = d[i] * f;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut ab = a.clone();
    let mut bb = b.clone();
    let mut cb = c.clone();
    for i in 0..n {
        for j in 0..n {
            ab[(i, j)] = a[(i, j)] * d[j] / d[i];
        }
        bb[(i, 0)] = b[(i, 0)] / d[i];
        cb[(0, i)] = c[(0, i)] * d[i];
    }
    Balanced { a: ab, b: bb, c: cb, d }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_preserves_transfer_quantities() {
        let a = Matrix::<f64>::from_rows(&[vec![0.0, -50.0], vec![21276.6, -967.12]]).unwrap();
        let b = Matrix::<f64>::column(&[1000.0, 0.0]);
        let c = Matrix::<f64>::row(&[0.0, -1.0]);
        let bal = balance(&a, &b, &c);
        let cab = (&(&c * &a) * &b).as_scalar();
        let cab2 = (&(&bal.c * &bal.a) * &bal.b).as_scalar();
        assert!((cab - cab2).abs() < 1e-9 * cab.abs());
        assert!((bal.a.trace() - a.trace()).abs() < 1e-9);
        // entries brought closer together
        let spread = |m: &Matrix<f64>| {
            let v: Vec<f64> = m.as_slice().iter().filter(|x| **x != 0.0).map(|x| x.abs()).collect();
            v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        assert!(spread(&bal.a) < spread(&a));
        let h = Matrix::<f64>::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let back = bal.form_to_original(&h);
        let dm = bal.d_matrix();
        assert!((&(&(&dm * &back) * &dm) - &h).max_abs() < 1e-15);
        let p = bal.gramian_to_original(&h);
        let dinv = Matrix::from_diag(&bal.d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
        assert!((&(&(&dinv * &p) * &dinv) - &h).max_abs() < 1e-12);
    }
}

//! Matrix form versus pointwise form of the same quadratic bound:
//!
//! ```text
//! H (A + eps I) + (A^T + eps I) H <= -H B B^T H / (2 eps)
//! x^T H (A x + B f) + eps (x^T H x - 1) <= 0   for all x and |f| <= 1
//! ```
//!
//! With `M = sym(H (A + eps I))` and `b = H B` the pointwise form is concave
//! in `x` when `M < 0`, and its maximum over `x` for a given `f` is
//! `-f^2 b^T M^{-1} b / 4 - eps`, largest at `|f| = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{solve, sym_eig, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Check<S> {
    /// Matrix inequality holds (eigenvalue test).
    pub matrix_form: bool,
    /// Pointwise inequality holds (analytic maximum over `x`, `|f| = 1`).
    pub pointwise_form: bool,
    /// Largest sampled value of the pointwise expression.
    pub sampled_max: S,
    /// Analytic supremum (`+inf` when unbounded).
    pub analytic_max: S,
    /// Maximiser for `f = 1` when the supremum is attained.
    pub maximizer: Option<Vec<S>>,
    pub agree: bool,
}

/// `x^T H (A x + B f) + eps (x^T H x - 1)`.
pub fn pointwise<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>, h: &Matrix<S>, eps: S, x: &Matrix<S>, f: S) -> S {
    let hx = h * x;
    let drift = &(a * x) + &b.scale(f);
    hx.dot(&drift) + eps * (x.dot(&hx) - S::one())
}

pub fn check_lemma1_equivalence<S: Scalar>(
    a: &Matrix<S>,
    b: &Matrix<S>,
    h: &Matrix<S>,
    eps: S,
    samples: usize,
    seed: u64,
) -> Result<Lemma1Check<S>> {
    let n = a.require_square()?;
    let ha = &(h * a) + &h.scale(eps);
    let m = ha.symmetric_part();
    let hb = h * b;
    let scale = m.norm_fro() + hb.dot(&hb) / eps;
    let tol = S::lit(1e-10) * scale.max(S::lit(S::EPS));

    let quarter = S::lit(0.25);
    let matrix_side = &m + &(&hb * &hb.transpose()).scale(quarter / eps);
    let matrix_form = sym_eig(&matrix_side)?.max() <= tol;

    let em = sym_eig(&m)?;
    let (analytic_max, maximizer) = if em.max() < -tol {
        // x* = -M^{-1} b / 2 for f = 1
        let minv_b = solve(&m, &hb)?;
        let val = -quarter * hb.dot(&minv_b) - eps;
        (val, Some(minv_b.scale(-S::lit(0.5)).into_vec()))
    } else if em.max() <= tol {
        // semidefinite: bounded only if b has no component on the null space
        let k = n - 1;
        let v = em.vector(k);
        let along: S = v.iter().zip(hb.as_slice()).map(|(&p, &q)| p * q).sum();
        if along.abs() <= tol.sqrt() {
            (-eps, None)
        } else {
            (S::infinity(), None)
        }
    } else {
        (S::infinity(), None)
    };
    let pointwise_form = analytic_max <= tol;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_max = S::neg_infinity();
    let hs = h.norm_fro().max(S::lit(S::EPS));
    for k in 0..samples {
        let r = S::lit(10f64.powf(rng.gen_range(-2.0..2.0))) / hs.sqrt();
        let x = Matrix::column(&(0..n).map(|_| S::lit(rng.gen_range(-1.0..1.0)) * r).collect::<Vec<_>>());
        let f = if k % 4 == 0 { S::one() } else { S::lit(rng.gen_range(-1.0..=1.0)) };
        sampled_max = sampled_max.max(pointwise(a, b, h, eps, &x, f));
    }
    if let Some(x) = &maximizer {
        let x = Matrix::column(x);
        sampled_max = sampled_max.max(pointwise(a, b, h, eps, &x, S::one()));
    }
    let sampled_ok = sampled_max <= tol;
    let agree = matrix_form == pointwise_form && (!pointwise_form || sampled_ok);
    Ok(Lemma1Check {
        matrix_form,
        pointwise_form,
        sampled_max,
        analytic_max,
        maximizer,
        agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_input() {
        let a = Matrix::<f64>::identity(2).scale(-1.0);
        let b = Matrix::<f64>::zeros(2, 1);
        let h = Matrix::<f64>::identity(2);
        let c = check_lemma1_equivalence(&a, &b, &h, 0.5, 500, 1).unwrap();
        assert!(c.matrix_form && c.pointwise_form && c.agree);
        assert!((c.analytic_max + 0.5).abs() < 1e-12);
    }

    #[test]
    fn violation_shows_at_maximiser() {
        // M = (-1 + 0.5) I = -0.5 I, b = (3, 0): M + b b^T / 2 has 4 on the diagonal
        let a = Matrix::<f64>::identity(2).scale(-1.0);
        let b = Matrix::<f64>::column(&[3.0, 0.0]);
        let h = Matrix::<f64>::identity(2);
        let c = check_lemma1_equivalence(&a, &b, &h, 0.5, 100, 2).unwrap();
        assert!(!c.matrix_form && !c.pointwise_form && c.agree);
        let x = Matrix::column(c.maximizer.as_ref().unwrap());
        assert!(pointwise(&a, &b, &h, 0.5, &x, 1.0) > 0.0);
        assert!((c.analytic_max - (9.0 / 2.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn unbounded_when_shifted_drift_expands() {
        let a = Matrix::<f64>::identity(2).scale(-0.1);
        let b = Matrix::<f64>::column(&[1.0, 0.0]);
        let c = check_lemma1_equivalence(&a, &b, &Matrix::identity(2), 0.5, 100, 3).unwrap();
        assert!(c.analytic_max.is_infinite());
        assert!(!c.matrix_form && c.agree);
    }
}

//! Matrix exponential by scaling and squaring with the degree-13 diagonal
//! Padé approximant.

use super::linsolve::solve;
use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the [13/13] approximant is accurate to unit
/// roundoff in double precision without scaling.
const THETA_13: f64 = 5.371920351148152;

pub fn matexp<S: Scalar>(m: &Matrix<S>) -> Result<Matrix<S>> {
    matexp_with(m, &Tolerances::standard())
}

pub fn matexp_with<S: Scalar>(m: &Matrix<S>, tol: &Tolerances) -> Result<Matrix<S>> {
    let n = m.require_square()?;
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix exponential argument"));
    }
    let norm = m.norm_one().as_f64();
    if norm > tol.matexp_max_norm {
        return Err(Error::NormTooLarge {
            norm,
            limit: tol.matexp_max_norm,
        });
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale(S::lit(0.5f64.powi(squarings)));
    let b = |i: usize| S::lit(PADE13[i]);

    let ident = Matrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let mut inner_u = &a6.scale(b(13)) + &a4.scale(b(11));
    inner_u += &a2.scale(b(9));
    let mut u = &a6 * &inner_u;
    u += &a6.scale(b(7));
    u += &a4.scale(b(5));
    u += &a2.scale(b(3));
    u += &ident.scale(b(1));
    let u = &a * &u;

    let mut inner_v = &a6.scale(b(12)) + &a4.scale(b(10));
    inner_v += &a2.scale(b(8));
    let mut v = &a6 * &inner_v;
    v += &a6.scale(b(6));
    v += &a4.scale(b(4));
    v += &a2.scale(b(2));
    v += &ident.scale(b(0));

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouthVerdict {
    /// Every root in the open left half-plane.
    Stable,
    /// A sign change in the first column of the Routh array.
    Unstable,
    /// A zero leading element (marginal case).
    Indeterminate,
}

/// Characteristic polynomial `det(sI - M)` by the Faddeev–LeVerrier
/// recurrence. Coefficients are returned highest degree first, monic.
pub fn char_poly<S: Scalar>(m: &Matrix<S>) -> Result<Vec<S>> {
    let n = m.require_square()?;
    let mut coeffs = vec![S::one()];
    let mut mk = Matrix::zeros(n, n);
    let mut c_prev = S::one();
    for k in 1..=n {
        mk = &(m * &mk) + &Matrix::identity(n).scale(c_prev);
        let c = -(m * &mk).trace() / S::of_usize(k);
        coeffs.push(c);
        c_prev = c;
    }
    Ok(coeffs)
}

/// Routh–Hurwitz test on a monic polynomial (highest degree first).
pub fn routh<S: Scalar>(coeffs: &[S], zero_tol: S) -> RouthVerdict {
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return RouthVerdict::Stable;
    }
    let width = degree / 2 + 1;
    let mut upper: Vec<S> = coeffs.iter().step_by(2).copied().collect();
    let mut lower: Vec<S> = coeffs.iter().skip(1).step_by(2).copied().collect();
    upper.resize(width, S::zero());
    lower.resize(width, S::zero());
    let lead_sign = coeffs[0].signum();
    if coeffs[0].abs() <= zero_tol {
        return RouthVerdict::Indeterminate;
    }
    for _row in 1..=degree {
        let lead = lower[0];
        if lead.abs() <= zero_tol {
            return RouthVerdict::Indeterminate;
        }
        if lead.signum() != lead_sign {
            return RouthVerdict::Unstable;
        }
        let mut next = vec![S::zero(); width];
        for j in 0..width - 1 {
            next[j] = (lead * upper[j + 1] - upper[0] * lower[j + 1]) / lead;
        }
        upper = lower;
        lower = next;
    }
    RouthVerdict::Stable
}

pub fn routh_verdict<S: Scalar>(m: &Matrix<S>, tol: &Tolerances) -> Result<RouthVerdict> {
    let n = m.require_square()?;
    if !m.is_finite() {
        return Err(Error::NonFinite("Hurwitz test"));
    }
    if n == 0 {
        return Ok(RouthVerdict::Stable);
    }
    let norm = m.norm_one();
    if norm == S::zero() {
        return Ok(RouthVerdict::Indeterminate);
    }
    // Scaling by a positive constant moves roots radially and keeps their
    // half-plane, while making the coefficients O(1).
    let normalised = m.scale(S::one() / norm);
    let coeffs = char_poly(&normalised)?;
    Ok(routh(&coeffs, S::lit(tol.routh_zero)))
}

/// True iff every eigenvalue of `m` has negative real part. Marginal cases
/// are reported as not Hurwitz.
pub fn is_hurwitz<S: Scalar>(m: &Matrix<S>) -> Result<bool> {
    Ok(routh_verdict(m, &Tolerances::standard())? == RouthVerdict::Stable)
}

pub fn hurwitz_margin<S: Scalar>(m: &Matrix<S>) -> Result<S> {
    hurwitz_margin_with(m, &Tolerances::standard())
}

/// `sup { eps > 0 : M + eps I is Hurwitz }`, i.e. the smallest `|Re λ|`, by
/// bisection on the Routh test.
pub fn hurwitz_margin_with<S: Scalar>(m: &Matrix<S>, tol: &Tolerances) -> Result<S> {
    if routh_verdict(m, tol)? != RouthVerdict::Stable {
        return Err(Error::NotHurwitz);
    }
    let mut lo = S::zero();
    let mut hi = m.norm_one();
    let rel = S::lit(tol.hurwitz_margin_rel);
    while hi - lo > rel * hi {
        let mid = (lo + hi) * S::lit(0.5);
        if routh_verdict(&m.add_identity(mid), tol)? == RouthVerdict::Stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * S::lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_poly_of_companion() {
        // s^3 + 2 s^2 + 3 s + 4
        let m = Matrix::<f64>::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![-4.0, -3.0, -2.0],
        ])
        .unwrap();
        let c = char_poly(&m).unwrap();
        for (got, want) in c.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn simple_cases() {
        assert!(is_hurwitz(&Matrix::<f64>::from_diag(&[-1.0, -2.0])).unwrap());
        let rot = Matrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        assert!(!is_hurwitz(&rot).unwrap());
        assert_eq!(
            routh_verdict(&rot, &Tolerances::standard()).unwrap(),
            RouthVerdict::Indeterminate
        );
        assert!(!is_hurwitz(&Matrix::<f64>::from_diag(&[-1.0, 0.5])).unwrap());
        assert!(!is_hurwitz(&Matrix::<f64>::zeros(2, 2)).unwrap());
    }

    #[test]
    fn margins() {
        let m = hurwitz_margin(&Matrix::<f64>::from_diag(&[-1.0, -2.0])).unwrap();
        assert!((m - 1.0).abs() < 1e-6);
        let m = hurwitz_margin(&Matrix::<f64>::identity(3).scale(-1.0)).unwrap();
        assert!((m - 1.0).abs() < 1e-6);
        assert!(matches!(
            hurwitz_margin(&Matrix::<f64>::from_diag(&[1.0, -1.0])),
            Err(Error::NotHurwitz)
        ));
    }

    #[test]
    fn complex_pair() {
        // eigenvalues -0.3 ± 5i and -7
        let m = Matrix::<f64>::from_rows(&[
            vec![-0.3, 5.0, 0.0],
            vec![-5.0, -0.3, 0.0],
            vec![1.0, 2.0, -7.0],
        ])
        .unwrap();
        assert!(is_hurwitz(&m).unwrap());
        assert!((hurwitz_margin(&m).unwrap() - 0.3).abs() < 1e-6 * 0.3 * 40.0);
    }
}

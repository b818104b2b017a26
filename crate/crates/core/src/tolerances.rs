//! Numerical tolerances shared by every module.
//!
//! All thresholds live in one record so that a report can echo the values a
//! run used. Relative tolerances are scaled by the norm of the object under
//! test unless the field name says otherwise.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest 1-norm accepted by the matrix exponential.
    pub matexp_max_norm: f64,
    /// Pivot threshold relative to the matrix infinity norm.
    pub singular_pivot: f64,
    /// Allowed `||M - M^T|| / ||M||` before a matrix is called asymmetric.
    pub symmetry: f64,
    /// Off-diagonal Frobenius mass (relative) at which Jacobi sweeps stop.
    pub jacobi_offdiag: f64,
    /// Routh leading elements below this (after normalising by `||M||`)
    /// are treated as zero.
    pub routh_zero: f64,
    /// Relative resolution of the Hurwitz-margin bisection.
    pub hurwitz_margin_rel: f64,
}

impl Tolerances {
    pub const fn standard() -> Self {
        Self {
            matexp_max_norm: 1e4,
            singular_pivot: 1e-14,
            symmetry: 1e-9,
            jacobi_offdiag: 1e-15,
            routh_zero: 1e-12,
            hurwitz_margin_rel: 1e-6,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::standard()
    }
}

//! Dense kernels for the small matrices in this crate: exponential, linear
//! solves, symmetric eigendecomposition and Hurwitz testing.

mod eig;
mod expm;
mod hurwitz;
mod linsolve;
mod matrix;

pub use eig::{asymmetry, equilibrated_min_eig, sym_eig, sym_eig_with, SymEig};
pub use expm::{matexp, matexp_with};
pub use hurwitz::{
    char_poly, hurwitz_margin, hurwitz_margin_with, is_hurwitz, routh, routh_verdict, RouthVerdict,
};
pub use linsolve::{determinant, inverse, solve, Lu};
pub use matrix::Matrix;

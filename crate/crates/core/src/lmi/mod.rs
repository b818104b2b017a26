//! Matrix-inequality certificates: existence (fixed-`eps` sweep), global
//! stability, the quadratic-form equivalence used by both, and threshold
//! search over the ramp amplitude.

pub mod balance;
pub mod lemma1;
pub mod problem;
pub mod solver;
pub mod theorem1;
pub mod theorem2;
pub mod threshold;

use serde::{Deserialize, Serialize};

pub use lemma1::{check_lemma1_equivalence, Lemma1Check};
pub use problem::{AffineMatrixConstraint, ConstraintMargin, LmiCertificate, LmiProblem, NamedMargin, Sense, SymVar};
pub use solver::{maximize_margin, solve_feasibility, SolveOutcome, SolverOptions};
pub use theorem1::{build_theorem1, theorem1_sweep, Theorem1Problem, Theorem1Sweep};
pub use theorem2::{build_theorem2, theorem2, Theorem2Audit, Theorem2Data, Theorem2Problem, Theorem2Result};
pub use threshold::{min_sigma_star, Target, ThresholdOptions, ThresholdResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmiOptions {
    pub solver: SolverOptions,
    /// Points in the `eps` sweep of the existence test.
    pub n_eps: usize,
    /// Bound on matrix-variable entries (balanced coordinates).
    pub matrix_bound: f64,
    /// `eps <= eps_box * sigma_star / T` in the stability test.
    pub eps_box: f64,
    /// `nu <= nu_box * sigma_star`.
    pub nu_box: f64,
}

impl Default for LmiOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            n_eps: 64,
            matrix_bound: 1e8,
            eps_box: 10.0,
            nu_box: 10.0,
        }
    }
}

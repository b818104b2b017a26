//! Existence test: for fixed `eps` find `P > 0` with
//!
//! ```text
//! -[A P + P A^T + 2 eps P + B B^T / (2 eps)] >= 0,   C A P A^T C^T < gamma^2,
//! gamma = sigma_star / T - min(0, C B),
//! ```
//!
//! and sweep `eps` over `(0, hurwitz_margin(A))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::balance::{balance, Balanced};
use crate::lmi::problem::{ConstraintMargin, LmiCertificate, LmiProblem, NamedMargin, Sense, SymVar};
use crate::lmi::solver::maximize_margin;
use crate::lmi::LmiOptions;
use crate::model::{LtiSystem, RampParams};
use crate::numerics::{hurwitz_margin, Matrix};
use crate::scalar::Scalar;

pub const LYAPUNOV: &str = "lyapunov";
pub const POSITIVE: &str = "P>0";
pub const OUTPUT: &str = "output";

pub fn gamma<S: Scalar>(sys: &LtiSystem<S>, ramp: &RampParams<S>) -> S {
    ramp.sigma_star / ramp.period - sys.cb().min(S::zero())
}

/// The three constraint values at `P`, in the order lyapunov, P>0, output.
pub fn theorem1_blocks<S: Scalar>(
    a: &Matrix<S>,
    b: &Matrix<S>,
    c: &Matrix<S>,
    eps: S,
    gamma: S,
    p: &Matrix<S>,
) -> [Matrix<S>; 3] {
    let two = S::lit(2.0);
    let bbt = &(b * &b.transpose()).scale(S::one() / (two * eps));
    let ap = a * p;
    let lyap = -&(&(&(&ap + &ap.transpose()) + &p.scale(two * eps)) + bbt);
    let ca = c * a;
    let out = gamma * gamma - (&(&ca * p) * &ca.transpose()).as_scalar();
    [lyap, p.clone(), Matrix::scalar(out)]
}

/// The fixed-`eps` problem, posed in balanced coordinates.
#[derive(Debug, Clone)]
pub struct Theorem1Problem<S: Scalar> {
    pub problem: LmiProblem<S>,
    pub eps: S,
    pub gamma: S,
    p_var: SymVar,
    balanced: Balanced<S>,
    sys: LtiSystem<S>,
}

pub fn build_theorem1<S: Scalar>(
    sys: &LtiSystem<S>,
    ramp: &RampParams<S>,
    eps: S,
    opts: &LmiOptions,
) -> Result<Theorem1Problem<S>> {
    ramp.validate()?;
    let sys = sys.shift()?;
    let max = hurwitz_margin(sys.a())?;
    if !(eps > S::zero() && eps < max) {
        return Err(Error::EpsilonOutOfRange {
            eps: eps.as_f64(),
            max: max.as_f64(),
        });
    }
    let gamma = gamma(&sys, ramp);
    let bal = balance(sys.a(), sys.b(), sys.c());
    let m = sys.dim();
    let mut problem = LmiProblem::new();
    let p_var = problem.add_symmetric("P", m, S::lit(opts.matrix_bound));

    let zero = Matrix::zeros(m, m);
    let constant = theorem1_blocks(&bal.a, &bal.b, &bal.c, eps, gamma, &zero);
    let senses = [Sense::NonStrict, Sense::Strict, Sense::Strict];
    for (k, name) in [LYAPUNOV, POSITIVE, OUTPUT].into_iter().enumerate() {
        let dim = constant[k].rows();
        let mut con = problem.new_constraint(name, dim, senses[k]);
        con.constant = constant[k].clone();
        con.add_linear_map(&p_var, |e| {
            let with = theorem1_blocks(&bal.a, &bal.b, &bal.c, eps, gamma, e);
            &with[k] - &constant[k]
        });
        problem.push(con);
    }
    Ok(Theorem1Problem {
        problem,
        eps,
        gamma,
        p_var,
        balanced: bal,
        sys,
    })
}

impl<S: Scalar> Theorem1Problem<S> {
    /// Solves, maps `P` back to the original coordinates and verifies every
    /// constraint there.
    pub fn certify(&self, opts: &LmiOptions) -> Result<LmiCertificate<S>> {
        let out = maximize_margin(&self.problem, &opts.solver)?;
        let p = self.balanced.gramian_to_original(&self.p_var.unpack(&out.z));
        let (margins, verified) = verify_theorem1(&self.sys, self.eps, self.gamma, &p, opts)?;
        Ok(LmiCertificate {
            matrices: vec![("P".to_string(), p.to_rows())],
            scalars: vec![("eps".to_string(), self.eps)],
            margins,
            feasible: out.feasible(&opts.solver) && verified,
            solver_margin: out.margin,
            solver_upper_bound: out.upper_bound,
            iterations: out.iterations,
            restarts: out.restarts,
            seed: out.seed,
        })
    }
}

/// Eigenvalue check of `P` against the original shifted system.
pub fn verify_theorem1<S: Scalar>(
    sys: &LtiSystem<S>,
    eps: S,
    gamma: S,
    p: &Matrix<S>,
    opts: &LmiOptions,
) -> Result<(Vec<NamedMargin<S>>, bool)> {
    let blocks = theorem1_blocks(sys.a(), sys.b(), sys.c(), eps, gamma, p);
    let tol = S::lit(opts.solver.margin_tol);
    let mut ok = true;
    let mut margins = Vec::new();
    for (k, name) in [LYAPUNOV, POSITIVE, OUTPUT].into_iter().enumerate() {
        let m = ConstraintMargin::of(&blocks[k])?;
        ok &= if k == 0 { m.min_eig >= S::zero() } else { m.passes_strict(tol) };
        margins.push(NamedMargin {
            name: name.to_string(),
            margin: m,
        });
    }
    Ok((margins, ok))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Sweep<S> {
    pub feasible: bool,
    /// `sigma1 < psi < sigma1 + sigma_star + C A^{-1} B`.
    pub ineq25_holds: bool,
    /// 1/s.
    pub eps: Option<S>,
    pub certificate: Option<LmiCertificate<S>>,
    pub grid_points: usize,
    /// 1/s.
    pub eps_max: S,
}

impl<S: Scalar> Theorem1Sweep<S> {
    /// Both existence conditions hold.
    pub fn existence_certified(&self) -> bool {
        self.feasible && self.ineq25_holds
    }
}

/// `n/2` logarithmic points in `[1e-4, 1 - 1e-3] * max` merged with `n/2`
/// uniform interior points, ascending.
pub fn eps_grid<S: Scalar>(max: S, n: usize) -> Vec<S> {
    let n_log = n / 2;
    let n_uni = n - n_log;
    let lo = (max * S::lit(1e-4)).ln();
    let hi = (max * S::lit(1.0 - 1e-3)).ln();
    let mut g: Vec<S> = (0..n_log)
        .map(|k| {
            let s = if n_log > 1 { S::of_usize(k) / S::of_usize(n_log - 1) } else { S::lit(0.5) };
            (lo + (hi - lo) * s).exp()
        })
        .chain((1..=n_uni).map(|k| max * S::of_usize(k) / S::of_usize(n_uni + 1)))
        .collect();
    g.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    g.dedup();
    g
}

/// Returns the first feasible grid point in ascending order of `eps`.
pub fn theorem1_sweep<S: Scalar>(sys: &LtiSystem<S>, ramp: &RampParams<S>, opts: &LmiOptions) -> Result<Theorem1Sweep<S>> {
    let shifted = sys.shift()?;
    let psi = shifted.psi();
    let ineq25_holds = ramp.sigma1 < psi && psi < ramp.sigma1 + ramp.sigma_star + shifted.c_ainv_b()?;
    let eps_max = hurwitz_margin(shifted.a())?;
    let grid = eps_grid(eps_max, opts.n_eps);
    let found = grid
        .par_iter()
        .map(|&eps| -> Result<Option<LmiCertificate<S>>> {
            let cert = build_theorem1(&shifted, ramp, eps, opts)?.certify(opts)?;
            Ok(cert.feasible.then_some(cert))
        })
        .find_first(|r| !matches!(r, Ok(None)));
    let certificate = match found {
        Some(r) => r?,
        None => None,
    };
    Ok(Theorem1Sweep {
        feasible: certificate.is_some(),
        ineq25_holds,
        eps: certificate.as_ref().and_then(|c| c.scalar("eps")),
        certificate,
        grid_points: grid.len(),
        eps_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, ControlConfig, PowerStageParams};
    use crate::numerics::solve;

    fn buck_system() -> LtiSystem<f64> {
        let p = PowerStageParams::new(22.0, 47e-6, 20e-3, 20.0).unwrap();
        assemble(&p, &ControlConfig::Proportional { a: 1.0, vref: 13.5 }).unwrap()
    }

    /// Smallest `P` from the Lyapunov equation
    /// `(A + eps I) P + P (A + eps I)^T = -B B^T / (2 eps)`, by Kronecker
    /// vectorisation.
    fn lyapunov_p(a: &Matrix<f64>, b: &Matrix<f64>, eps: f64) -> Matrix<f64> {
        let m = a.rows();
        let ae = a.add_identity(eps);
        let mut k = Matrix::zeros(m * m, m * m);
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    // (Ae P)_{ij} = sum_l Ae_{il} P_{lj};  (P Ae^T)_{ij} = sum_l P_{il} Ae_{jl}
                    k[(i * m + j, l * m + j)] += ae[(i, l)];
                    k[(i * m + j, i * m + l)] += ae[(j, l)];
                }
            }
        }
        let q = (b * &b.transpose()).scale(-1.0 / (2.0 * eps));
        let rhs = Matrix::column(q.as_slice());
        let v = solve(&k, &rhs).unwrap();
        Matrix::new(m, m, v.into_vec()).unwrap()
    }

    fn oracle_threshold(sys: &LtiSystem<f64>, period: f64) -> f64 {
        let max = hurwitz_margin(sys.a()).unwrap();
        let ca = sys.c() * sys.a();
        let f = |eps: f64| {
            let p = lyapunov_p(sys.a(), sys.b(), eps);
            (&(&ca * &p) * &ca.transpose()).as_scalar().sqrt() * period
        };
        // unimodal in eps; golden-section on a fine bracket
        let n = 2000;
        let (mut best_e, mut best) = (0.0, f64::INFINITY);
        for k in 1..n {
            let e = max * k as f64 / n as f64;
            let v = f(e);
            if v < best {
                best = v;
                best_e = e;
            }
        }
        let (mut lo, mut hi) = (best_e - max / n as f64, best_e + max / n as f64);
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        f(0.5 * (lo + hi))
    }

    #[test]
    fn gamma_rule_and_zero_cb() {
        let sys = buck_system();
        assert_eq!(sys.cb(), 0.0);
        let r = RampParams::new(4.0, 18.0, 400e-6).unwrap();
        assert_eq!(gamma(&sys, &r), 18.0 / 400e-6);
    }

    #[test]
    fn lyapunov_block_at_identity() {
        let sys = buck_system();
        let eps = 10.0;
        let blocks = theorem1_blocks(sys.a(), sys.b(), sys.c(), eps, 1.0, &Matrix::identity(2));
        let a = sys.a();
        let sum = (&a.transpose() + a).add_identity(2.0 * eps);
        let direct = -&(&sum + &(sys.b() * &sys.b().transpose()).scale(1.0 / (2.0 * eps)));
        assert!((&blocks[0] - &direct).max_abs() < 1e-9);
    }

    #[test]
    fn scalar_hand_solved() {
        // A = -1, B = 1, C = 1, eps = 0.5: -(2p(-0.5) + 1) >= 0  <=>  p >= 1;
        // C A P A^T C^T = p < gamma^2 = 4; feasible with p in [1, 4)
        let sys = LtiSystem::new(
            Matrix::scalar(-1.0),
            Matrix::scalar(1.0),
            Matrix::scalar(1.0),
            0.0,
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let ramp = RampParams::new(1.0, 2.0, 1.0).unwrap();
        let opts = LmiOptions::default();
        let prob = build_theorem1(&sys, &ramp, 0.5, &opts).unwrap();
        let cert = prob.certify(&opts).unwrap();
        assert!(cert.feasible);
        let p = cert.matrix("P").unwrap()[(0, 0)];
        assert!((1.0..4.0).contains(&p), "p = {p}");
        // gamma^2 = 0.81 < 1: no p works
        let tight = RampParams::new(1.0, 0.9, 1.0).unwrap();
        let cert = build_theorem1(&sys, &tight, 0.5, &opts).unwrap().certify(&opts).unwrap();
        assert!(!cert.feasible);
    }

    #[test]
    fn eps_range_checked() {
        let sys = buck_system();
        let r = RampParams::new(4.0, 18.0, 400e-6).unwrap();
        let opts = LmiOptions::default();
        assert!(matches!(build_theorem1(&sys, &r, 0.0, &opts), Err(Error::EpsilonOutOfRange { .. })));
        assert!(matches!(build_theorem1(&sys, &r, 500.0, &opts), Err(Error::EpsilonOutOfRange { .. })));
    }

    #[test]
    fn grid_shape() {
        let g = eps_grid(483.56_f64, 64);
        assert_eq!(g.len(), 64);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(g[0] > 0.0 && *g.last().unwrap() < 483.56);
    }

    #[test]
    fn sweep_matches_lyapunov_oracle() {
        let sys = buck_system();
        let th = oracle_threshold(&sys, 400e-6);
        assert!((th - 12.82).abs() < 0.05, "oracle threshold {th}");
        let opts = LmiOptions::default();
        let above = theorem1_sweep(&sys, &RampParams::new(4.0, th + 0.15, 400e-6).unwrap(), &opts).unwrap();
        assert!(above.existence_certified());
        let cert = above.certificate.unwrap();
        assert!(cert.margins.iter().all(|m| m.margin.min_eig >= 0.0));
        let below = theorem1_sweep(&sys, &RampParams::new(4.0, th - 0.15, 400e-6).unwrap(), &opts).unwrap();
        assert!(!below.feasible);
        let low = theorem1_sweep(&sys, &RampParams::new(4.0, 5.0, 400e-6).unwrap(), &opts).unwrap();
        assert!(!low.feasible);
        let high = theorem1_sweep(&sys, &RampParams::new(4.0, 18.0, 400e-6).unwrap(), &opts).unwrap();
        assert!(high.feasible);
    }
}

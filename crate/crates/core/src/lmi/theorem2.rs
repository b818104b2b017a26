//! Global stability test `R(eps, nu) - L(H) > 0`, `H > 0`, `eps > 0`,
//! `nu > 0`, with blocks ordered `(y, u, v, slack)`.
//!
//! The `[v, v]` entry of `R` is `sigma_star - T L1 - nu - eps - T |kappa|`
//! and `eps` also appears alone in the `[slack, slack]` entry; both scalars
//! are used as plain numbers, so `eps` here is in volts, unlike the existence
//! test where it is a rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::balance::balance;
use crate::lmi::problem::{ConstraintMargin, LmiCertificate, LmiProblem, NamedMargin, Sense, SymVar};
use crate::lmi::solver::maximize_margin;
use crate::lmi::LmiOptions;
use crate::model::{LtiSystem, RampParams};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

pub const MAIN: &str = "R-L";
pub const POSITIVE: &str = "H>0";
pub const EPS: &str = "eps>0";
pub const NU: &str = "nu>0";

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Data<S: Scalar> {
    /// `-C B`.
    pub kappa: S,
    /// `-C A B`.
    pub kappa1: S,
    /// `T / pi`, seconds.
    pub kappa2: S,
    /// V/s.
    pub l1: S,
    pub sigma_star: S,
    pub period: S,
    pub a: Matrix<S>,
    pub b: Matrix<S>,
    pub c: Matrix<S>,
}

impl<S: Scalar> Theorem2Data<S> {
    /// From explicit matrices; `sigma_star - T L1` must be positive.
    pub fn from_matrices(a: Matrix<S>, b: Matrix<S>, c: Matrix<S>, ramp: &RampParams<S>, l1: S) -> Result<Self> {
        ramp.validate()?;
        let slack = ramp.sigma_star - ramp.period * l1;
        if !(slack > S::zero()) {
            return Err(Error::SectorViolated { slack: slack.as_f64() });
        }
        if !(l1 >= S::zero() && l1.is_finite()) {
            return Err(Error::invalid("L1", "must be finite and non-negative"));
        }
        let kappa = -(&c * &b).as_scalar();
        let kappa1 = -(&(&c * &a) * &b).as_scalar();
        Ok(Self {
            kappa,
            kappa1,
            kappa2: ramp.period / S::lit(std::f64::consts::PI),
            l1,
            sigma_star: ramp.sigma_star,
            period: ramp.period,
            a,
            b,
            c,
        })
    }

    pub fn new(sys: &LtiSystem<S>, ramp: &RampParams<S>, l1: S) -> Result<Self> {
        let sys = sys.shift()?;
        Self::from_matrices(sys.a().clone(), sys.b().clone(), sys.c().clone(), ramp, l1)
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// `sigma_star - T L1 - nu - eps - T |kappa|`.
    pub fn r33(&self, eps: S, nu: S) -> S {
        self.sigma_star - self.period * self.l1 - nu - eps - self.period * self.kappa.abs()
    }

    pub fn l_matrix(&self, h: &Matrix<S>) -> Matrix<S> {
        let m = self.dim();
        let ha = h * &self.a;
        let hab = &ha * &self.b;
        let hb = h * &self.b;
        let mut l = Matrix::zeros(m + 3, m + 3);
        l.set_block(0, 0, &(&ha + &ha.transpose()));
        l.set_block(0, m, &hab);
        l.set_block(m, 0, &hab.transpose());
        l.set_block(0, m + 1, &hb);
        l.set_block(m + 1, 0, &hb.transpose());
        l
    }

    pub fn r_matrix(&self, eps: S, nu: S) -> Matrix<S> {
        let m = self.dim();
        let half = S::lit(0.5);
        let (u, v, w) = (m, m + 1, m + 2);
        let ca = (&self.c * &self.a).scale(self.kappa2);
        let mut r = Matrix::zeros(m + 3, m + 3);
        for i in 0..m {
            r[(i, v)] = -half * self.c[(0, i)];
            r[(v, i)] = -half * self.c[(0, i)];
            r[(i, w)] = ca[(0, i)];
            r[(w, i)] = ca[(0, i)];
        }
        r[(u, u)] = S::lit(3.0) * nu / (self.period * self.period);
        r[(u, w)] = -self.kappa2 * self.kappa1;
        r[(w, u)] = -self.kappa2 * self.kappa1;
        r[(v, v)] = self.r33(eps, nu);
        r[(v, w)] = -self.kappa2 * self.kappa;
        r[(w, v)] = -self.kappa2 * self.kappa;
        r[(w, w)] = eps;
        r
    }

    /// `R(eps, nu) - L(H)`.
    pub fn main_block(&self, h: &Matrix<S>, eps: S, nu: S) -> Matrix<S> {
        &self.r_matrix(eps, nu) - &self.l_matrix(h)
    }

    /// Margins of all four conditions, recomputed from scratch.
    pub fn verify(&self, h: &Matrix<S>, eps: S, nu: S, tol: S) -> Result<(Vec<NamedMargin<S>>, bool)> {
        let blocks = [
            (MAIN, self.main_block(h, eps, nu)),
            (POSITIVE, h.clone()),
            (EPS, Matrix::scalar(eps)),
            (NU, Matrix::scalar(nu)),
        ];
        let mut ok = true;
        let mut margins = Vec::new();
        for (name, m) in blocks {
            let margin = ConstraintMargin::of(&m)?;
            ok &= margin.passes_strict(tol);
            margins.push(NamedMargin {
                name: name.to_string(),
                margin,
            });
        }
        Ok((margins, ok))
    }
}

/// Printed entries for audit, in report units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Audit<S> {
    pub kappa: S,
    pub kappa1: S,
    pub kappa2_s: S,
    pub t_l1_v: S,
    /// `[v, v]` entry of `R` at the certificate.
    pub r33_v: S,
    pub r: Vec<Vec<S>>,
    pub l: Vec<Vec<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Result<S> {
    pub certificate: LmiCertificate<S>,
    pub audit: Theorem2Audit<S>,
}

/// The problem in balanced coordinates, with the `u` row and column scaled
/// by `T`.
#[derive(Debug, Clone)]
pub struct Theorem2Problem<S: Scalar> {
    pub problem: LmiProblem<S>,
    pub data: Theorem2Data<S>,
    h_var: SymVar,
    eps_idx: usize,
    nu_idx: usize,
    d: Vec<S>,
}

pub fn build_theorem2<S: Scalar>(
    sys: &LtiSystem<S>,
    ramp: &RampParams<S>,
    l1: S,
    opts: &LmiOptions,
) -> Result<Theorem2Problem<S>> {
    let data = Theorem2Data::new(sys, ramp, l1)?;
    let bal = balance(&data.a, &data.b, &data.c);
    let scaled = Theorem2Data::from_matrices(bal.a.clone(), bal.b.clone(), bal.c.clone(), ramp, l1)?;
    let m = data.dim();

    let mut problem = LmiProblem::new();
    let h_var = problem.add_symmetric("H", m, S::lit(opts.matrix_bound));
    let eps_idx = problem.add_scalar("eps", S::zero(), S::lit(opts.eps_box) * ramp.sigma_star / ramp.period);
    let nu_idx = problem.add_scalar("nu", S::zero(), S::lit(opts.nu_box) * ramp.sigma_star);

    let mut w = Matrix::identity(m + 3);
    w[(m, m)] = ramp.period;
    let zero_h = Matrix::zeros(m, m);
    let r0 = scaled.r_matrix(S::zero(), S::zero());
    let mut main = problem.new_constraint(MAIN, m + 3, Sense::Strict);
    main.constant = r0.clone();
    main.add_linear_map(&h_var, |e| -&scaled.l_matrix(e));
    main.coefficients[eps_idx] = &scaled.r_matrix(S::one(), S::zero()) - &r0;
    main.coefficients[nu_idx] = &scaled.r_matrix(S::zero(), S::one()) - &r0;
    debug_assert!(scaled.l_matrix(&zero_h).max_abs() == S::zero());
    problem.push(main.congruence(&w));

    let mut pos = problem.new_constraint(POSITIVE, m, Sense::Strict);
    pos.add_linear_map(&h_var, |e| e.clone());
    problem.push(pos);
    for (name, idx) in [(EPS, eps_idx), (NU, nu_idx)] {
        let mut c = problem.new_constraint(name, 1, Sense::Strict);
        c.coefficients[idx] = Matrix::scalar(S::one());
        problem.push(c);
    }
    Ok(Theorem2Problem {
        problem,
        data,
        h_var,
        eps_idx,
        nu_idx,
        d: bal.d,
    })
}

impl<S: Scalar> Theorem2Problem<S> {
    pub fn certify(&self, opts: &LmiOptions) -> Result<Theorem2Result<S>> {
        let out = maximize_margin(&self.problem, &opts.solver)?;
        let hb = self.h_var.unpack(&out.z);
        let m = self.data.dim();
        let mut h = hb.clone();
        for i in 0..m {
            for j in 0..m {
                h[(i, j)] = hb[(i, j)] / (self.d[i] * self.d[j]);
            }
        }
        let (eps, nu) = (out.z[self.eps_idx], out.z[self.nu_idx]);
        let (margins, verified) = self.data.verify(&h, eps, nu, S::lit(opts.solver.margin_tol))?;
        let audit = Theorem2Audit {
            kappa: self.data.kappa,
            kappa1: self.data.kappa1,
            kappa2_s: self.data.kappa2,
            t_l1_v: self.data.period * self.data.l1,
            r33_v: self.data.r33(eps, nu),
            r: self.data.r_matrix(eps, nu).to_rows(),
            l: self.data.l_matrix(&h).to_rows(),
        };
        Ok(Theorem2Result {
            certificate: LmiCertificate {
                matrices: vec![("H".to_string(), h.to_rows())],
                scalars: vec![("eps".to_string(), eps), ("nu".to_string(), nu)],
                margins,
                feasible: out.feasible(&opts.solver) && verified,
                solver_margin: out.margin,
                solver_upper_bound: out.upper_bound,
                iterations: out.iterations,
                restarts: out.restarts,
                seed: out.seed,
            },
            audit,
        })
    }
}

/// Builds, solves and verifies in one call.
pub fn theorem2<S: Scalar>(sys: &LtiSystem<S>, ramp: &RampParams<S>, l1: S, opts: &LmiOptions) -> Result<Theorem2Result<S>> {
    build_theorem2(sys, ramp, l1, opts)?.certify(opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, ControlConfig, PowerStageParams};
    use crate::numerics::sym_eig;

    fn buck_system() -> LtiSystem<f64> {
        let p = PowerStageParams::new(22.0, 47e-6, 20e-3, 20.0).unwrap();
        assemble(&p, &ControlConfig::Proportional { a: 1.0, vref: 13.5 }).unwrap()
    }

    fn ramp(s: f64) -> RampParams<f64> {
        RampParams::new(4.0, s, 400e-6).unwrap()
    }

    #[test]
    fn kappas_by_direct_arithmetic() {
        let d = Theorem2Data::new(&buck_system(), &ramp(18.0), 0.44 / 400e-6).unwrap();
        assert_eq!(d.kappa, 0.0);
        let expected = 20.0 / (20e-3 * 47e-6);
        assert!((d.kappa1 - expected).abs() < 1e-9 * expected);
        assert!((d.kappa1 - 2.1277e7).abs() < 1e3);
        assert!((d.kappa2 - 1.2732e-4).abs() < 1e-8);
    }

    #[test]
    fn printed_entries() {
        let d = Theorem2Data::new(&buck_system(), &ramp(18.0), 0.44 / 400e-6).unwrap();
        let (eps, nu) = (0.3, 2.0);
        let r = d.r_matrix(eps, nu);
        assert!((r[(3, 3)] - (18.0 - 0.44 - nu - eps)).abs() < 1e-12);
        assert_eq!(r[(4, 4)], eps);
        assert!((r[(2, 2)] - 3.0 * nu / (400e-6 * 400e-6)).abs() < 1e-3);
        // -C^T / 2 with C = [0, -1]
        assert_eq!(r[(1, 3)], 0.5);
        assert_eq!(r[(0, 3)], 0.0);
        let ca = &(d.c) * &(d.a);
        assert!((r[(0, 4)] - d.kappa2 * ca[(0, 0)]).abs() < 1e-12);
        assert_eq!(r[(2, 4)], -d.kappa2 * d.kappa1);
        assert!(d.l_matrix(&Matrix::zeros(2, 2)).max_abs() == 0.0);
        assert!(sym_eig(&r).is_ok());
    }

    #[test]
    fn l_is_linear_in_h() {
        let d = Theorem2Data::new(&buck_system(), &ramp(18.0), 1000.0).unwrap();
        let h = Matrix::<f64>::from_rows(&[vec![2.0, 0.1], vec![0.1, 0.5]]).unwrap();
        let l = d.l_matrix(&h);
        for s in [0.25, 0.5, 1.0] {
            assert!((&d.l_matrix(&h.scale(s)) - &l.scale(s)).max_abs() <= 1e-12 * l.max_abs());
        }
        // lambda_min(R - s L) is concave in s
        let r = d.r_matrix(1.0, 1.0);
        let f = |s: f64| sym_eig(&(&r - &l.scale(s))).unwrap().min();
        for k in 1..9 {
            let (a, b) = ((k - 1) as f64 / 8.0, (k + 1) as f64 / 8.0);
            assert!(f(0.5 * (a + b)) >= 0.5 * (f(a) + f(b)) - 1e-9 * r.max_abs());
        }
    }

    #[test]
    fn sector_precondition() {
        let r = Theorem2Data::new(&buck_system(), &ramp(18.0), 18.0 / 400e-6);
        assert!(matches!(r, Err(Error::SectorViolated { .. })));
    }

    #[test]
    fn feasible_at_eighteen_with_verified_margins() {
        let res = theorem2(&buck_system(), &ramp(18.0), 0.44 / 400e-6, &LmiOptions::default()).unwrap();
        let c = &res.certificate;
        assert!(c.feasible, "{:?}", c.margins);
        for m in &c.margins {
            assert!(m.margin.min_eig > 0.0, "{}", m.name);
        }
        assert!(c.scalar("eps").unwrap() > 0.0 && c.scalar("nu").unwrap() > 0.0);
    }

    #[test]
    fn infeasible_well_below_threshold() {
        let res = theorem2(&buck_system(), &ramp(15.0), 0.44 / 400e-6, &LmiOptions::default()).unwrap();
        assert!(!res.certificate.feasible);
    }
}

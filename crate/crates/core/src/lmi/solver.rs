//! Max-margin feasibility solver.
//!
//! Maximises `phi(z) = min_k w_k * lambda_min(G_k(z))` over the variable box,
//! where `w_k` normalises each constraint by the norm of its constant term.
//! `phi` is concave; a supergradient is `w_k * (v^T G_{k,i} v)_i` with `v` the
//! eigenvector of the active constraint's smallest eigenvalue.
//!
//! Each restart runs projected supergradient ascent from a random point and
//! then a deep-cut ellipsoid method started from an ellipsoid that covers the
//! whole box. The ellipsoid phase yields an upper bound on `max phi`, which
//! is used to stop early once the answer is decided either way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lmi::problem::{ConstraintMargin, LmiCertificate, LmiProblem, NamedMargin, Sense};
use crate::numerics::{sym_eig, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub restarts: usize,
    /// Iterations per restart, both phases together.
    pub max_iter: usize,
    pub seed: u64,
    /// Normalised margin a certificate must exceed.
    pub margin_tol: f64,
    /// Stop once `(upper - best) <= rel_gap * |upper|` with `best` feasible.
    pub rel_gap: f64,
    /// Restarts evaluated concurrently between stopping checks.
    pub batch: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 5000,
            seed: 0x5EED_2024,
            margin_tol: 1e-9,
            rel_gap: 1e-3,
            batch: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome<S> {
    pub z: Vec<S>,
    /// Best normalised margin.
    pub margin: S,
    /// Upper bound on the normalised margin over the box.
    pub upper_bound: S,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl<S: Scalar> SolveOutcome<S> {
    pub fn feasible(&self, opts: &SolverOptions) -> bool {
        self.margin > S::lit(opts.margin_tol)
    }
}

struct Objective<'a, S: Scalar> {
    problem: &'a LmiProblem<S>,
    weights: Vec<S>,
    lo: Vec<S>,
    hi: Vec<S>,
}

impl<'a, S: Scalar> Objective<'a, S> {
    fn new(problem: &'a LmiProblem<S>) -> Self {
        let weights = problem
            .constraints
            .iter()
            .map(|c| {
                let n = c.constant.norm_fro();
                if n > S::zero() {
                    S::one() / n
                } else {
                    S::one()
                }
            })
            .collect();
        Self {
            problem,
            weights,
            lo: problem.variables.iter().map(|v| v.lower).collect(),
            hi: problem.variables.iter().map(|v| v.upper).collect(),
        }
    }

    fn n(&self) -> usize {
        self.lo.len()
    }

    /// `(phi(z), supergradient)`; `None` if an eigenproblem fails.
    fn eval(&self, z: &[S]) -> Option<(S, Vec<S>)> {
        let mut best: Option<(S, usize, Vec<S>)> = None;
        for (k, c) in self.problem.constraints.iter().enumerate() {
            let g = c.value(z);
            let e = sym_eig(&g).ok()?;
            let val = e.min() * self.weights[k];
            if best.as_ref().map_or(true, |b| val < b.0) {
                best = Some((val, k, e.vector(0)));
            }
        }
        let (val, k, v) = best?;
        let c = &self.problem.constraints[k];
        let grad = c.coefficients.iter().map(|gi| gi.quad_form(&v) * self.weights[k]).collect();
        Some((val, grad))
    }

    fn project(&self, z: &mut [S]) {
        for i in 0..z.len() {
            z[i] = z[i].max(self.lo[i]).min(self.hi[i]);
        }
    }
}

struct RestartResult<S> {
    z: Vec<S>,
    best: S,
    upper: S,
    iterations: usize,
}

fn decided<S: Scalar>(best: S, upper: S, opts: &SolverOptions) -> bool {
    let tol = S::lit(opts.margin_tol);
    upper <= tol || (best > tol && upper - best <= S::lit(opts.rel_gap) * upper.abs())
}

fn run_restart<S: Scalar>(obj: &Objective<S>, opts: &SolverOptions, seed: u64) -> RestartResult<S> {
    let n = obj.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<S> = (0..n)
        .map(|i| {
            let u: f64 = rng.gen();
            obj.lo[i] + (obj.hi[i] - obj.lo[i]) * S::lit(u)
        })
        .collect();
    let half: Vec<S> = (0..n).map(|i| (obj.hi[i] - obj.lo[i]) * S::lit(0.5)).collect();
    let mut best_z = z.clone();
    let mut best = S::neg_infinity();
    let mut upper = S::infinity();
    let mut iterations = 0;

    // projected supergradient ascent, steps scaled by the box half-widths
    let sg_iters = opts.max_iter / 5;
    for k in 0..sg_iters {
        iterations += 1;
        let Some((val, g)) = obj.eval(&z) else { break };
        if val > best {
            best = val;
            best_z.clone_from(&z);
        }
        let scaled: Vec<S> = g.iter().zip(&half).map(|(&gi, &h)| gi * h).collect();
        let norm = scaled.iter().map(|&x| x * x).sum::<S>().sqrt();
        if norm == S::zero() {
            break;
        }
        let step = S::lit(0.1) / S::of_usize(k + 1).sqrt();
        for i in 0..n {
            z[i] = z[i] + step * scaled[i] * half[i] / norm;
        }
        obj.project(&mut z);
    }

    let budget = opts.max_iter.saturating_sub(iterations);
    if n == 1 {
        interval_phase(obj, opts, budget, &mut best_z, &mut best, &mut upper, &mut iterations);
    } else if n > 1 {
        ellipsoid_phase(obj, opts, budget, &mut best_z, &mut best, &mut upper, &mut iterations);
    } else if let Some((val, _)) = obj.eval(&[]) {
        best = val;
        upper = val;
    }
    RestartResult {
        z: best_z,
        best,
        upper: upper.max(best),
        iterations,
    }
}

fn interval_phase<S: Scalar>(
    obj: &Objective<S>,
    opts: &SolverOptions,
    budget: usize,
    best_z: &mut Vec<S>,
    best: &mut S,
    upper: &mut S,
    iterations: &mut usize,
) {
    let (mut a, mut b) = (obj.lo[0], obj.hi[0]);
    for _ in 0..budget {
        *iterations += 1;
        let c = (a + b) * S::lit(0.5);
        let Some((val, g)) = obj.eval(&[c]) else { return };
        if val > *best {
            *best = val;
            *best_z = vec![c];
        }
        let g = g[0];
        let bound = if g > S::zero() { val + g * (b - c) } else { val + g * (a - c) };
        *upper = upper.min(bound);
        if decided(*best, *upper, opts) || b - a <= S::lit(S::EPS) * (a.abs() + b.abs()) {
            return;
        }
        if g > S::zero() {
            a = c;
        } else {
            b = c;
        }
    }
}

fn ellipsoid_phase<S: Scalar>(
    obj: &Objective<S>,
    opts: &SolverOptions,
    budget: usize,
    best_z: &mut Vec<S>,
    best: &mut S,
    upper: &mut S,
    iterations: &mut usize,
) {
    let n = obj.n();
    let nf = S::of_usize(n);
    let mut c = best_z.clone();
    // axis-aligned ellipsoid around the start that contains the box
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let r = (c[i] - obj.lo[i]).max(obj.hi[i] - c[i]).max(S::lit(S::EPS));
        p[(i, i)] = nf * r * r;
    }
    for _ in 0..budget {
        *iterations += 1;
        // cut direction h and depth beta: keep h^T (z - c) <= -beta
        let outside = (0..n).find(|&i| c[i] < obj.lo[i] || c[i] > obj.hi[i]);
        let (h, beta) = if let Some(i) = outside {
            let mut h = vec![S::zero(); n];
            if c[i] > obj.hi[i] {
                h[i] = S::one();
                (h, c[i] - obj.hi[i])
            } else {
                h[i] = -S::one();
                (h, obj.lo[i] - c[i])
            }
        } else {
            let Some((val, g)) = obj.eval(&c) else { return };
            if val > *best {
                *best = val;
                best_z.clone_from(&c);
            }
            let ph: Vec<S> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] * g[j]).sum()).collect();
            let gpg: S = (0..n).map(|i| g[i] * ph[i]).sum();
            if !(gpg > S::zero()) || !gpg.is_finite() {
                *upper = upper.min(val);
                return;
            }
            *upper = upper.min(val + gpg.sqrt());
            if decided(*best, *upper, opts) {
                return;
            }
            (g.iter().map(|&x| -x).collect(), *best - val)
        };
        let ph: Vec<S> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] * h[j]).sum()).collect();
        let hph: S = (0..n).map(|i| h[i] * ph[i]).sum();
        if !(hph > S::zero()) || !hph.is_finite() {
            return;
        }
        let root = hph.sqrt();
        let alpha = (beta / root).max(S::zero());
        if alpha >= S::one() {
            // nothing better than the incumbent remains
            *upper = upper.min(*best);
            return;
        }
        let one = S::one();
        let step = (one + nf * alpha) / (nf + one);
        for i in 0..n {
            c[i] = c[i] - step * ph[i] / root;
        }
        let shrink = nf * nf * (one - alpha * alpha) / (nf * nf - one);
        let rank1 = S::lit(2.0) * (one + nf * alpha) / ((nf + one) * (one + alpha));
        for i in 0..n {
            for j in 0..=i {
                let v = shrink * (p[(i, j)] - rank1 * ph[i] * ph[j] / hph);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
    }
}

/// Maximises the normalised margin. Restarts run in parallel batches; the
/// result depends only on the problem and the options.
pub fn maximize_margin<S: Scalar>(problem: &LmiProblem<S>, opts: &SolverOptions) -> Result<SolveOutcome<S>> {
    problem.validate()?;
    let obj = Objective::new(problem);
    let batch = opts.batch.max(1);
    let restarts = opts.restarts.max(1);
    let mut best_z = vec![S::zero(); obj.n()];
    let mut best = S::neg_infinity();
    let mut upper = S::infinity();
    let mut iterations = 0;
    let mut run = 0;
    while run < restarts {
        let end = (run + batch).min(restarts);
        let results: Vec<RestartResult<S>> = (run..end)
            .into_par_iter()
            .map(|r| run_restart(&obj, opts, opts.seed.wrapping_add(r as u64)))
            .collect();
        for r in results {
            iterations += r.iterations;
            upper = upper.min(r.upper);
            if r.best > best {
                best = r.best;
                best_z = r.z;
            }
        }
        run = end;
        if decided(best, upper.max(best), opts) {
            break;
        }
    }
    Ok(SolveOutcome {
        z: best_z,
        margin: best,
        upper_bound: upper.max(best),
        iterations,
        restarts: run,
        seed: opts.seed,
    })
}

/// Solves and re-verifies every constraint by eigenvalues at the returned
/// point. Strict constraints need a positive smallest eigenvalue and an
/// equilibrated margin above `margin_tol`; non-strict ones a smallest
/// eigenvalue above `-margin_tol` times their norm.
pub fn solve_feasibility<S: Scalar>(problem: &LmiProblem<S>, opts: &SolverOptions) -> Result<LmiCertificate<S>> {
    let out = maximize_margin(problem, opts)?;
    let tol = S::lit(opts.margin_tol);
    let mut margins = Vec::new();
    let mut feasible = out.feasible(opts);
    for c in &problem.constraints {
        let m = ConstraintMargin::of(&c.value(&out.z))?;
        feasible &= match c.sense {
            Sense::Strict => m.passes_strict(tol),
            Sense::NonStrict => m.min_eig >= -tol * m.norm.max(S::one()),
        };
        margins.push(NamedMargin {
            name: c.name.clone(),
            margin: m,
        });
    }
    Ok(LmiCertificate {
        matrices: Vec::new(),
        scalars: problem
            .variables
            .iter()
            .zip(&out.z)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect(),
        margins,
        feasible,
        solver_margin: out.margin,
        solver_upper_bound: out.upper_bound,
        iterations: out.iterations,
        restarts: out.restarts,
        seed: out.seed,
    })
}

//! Unsaturated T-periodic modes.
//!
//! For a pulse of width `tau` repeated every period, the shifted linear part
//! has a unique periodic response starting from
//!
//! ```text
//! x_hat(tau) = (I - e^{AT})^{-1} (e^{AT} - e^{A(T - tau)}) A^{-1} B
//! ```
//!
//! (algebraically equal to `-(I - e^{-AT})^{-1} (I - e^{-A tau}) A^{-1} B`,
//! but built from decaying exponentials only). A width `tau` is an operating
//! mode when the control signal along that response meets the ramp exactly at
//! `tau` and stays strictly above it before.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{assemble, ControlConfig, LtiSystem, PowerStageParams, RampParams};
use crate::numerics::{matexp, solve, Lu, Matrix};
use crate::scalar::Scalar;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Grid sizes for the mode search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModeSearch {
    /// Uniform `tau` grid on `(0, T)` scanned for sign changes.
    pub n_scan: usize,
    /// Points on `[0, tau)` where the strict ramp inequality is checked.
    pub n_check: usize,
    /// Root residual target relative to `sigma_star`.
    pub root_tol: f64,
    /// Margin below which the strict inequality counts as violated,
    /// relative to `sigma_star` (a negative number).
    pub margin_tol: f64,
    /// Grid for the slope bound.
    pub l1_grid: usize,
}

impl Default for ModeSearch {
    fn default() -> Self {
        Self {
            n_scan: 2048,
            n_check: 2048,
            root_tol: 1e-10,
            margin_tol: -1e-9,
            l1_grid: 4096,
        }
    }
}

/// Response of the shifted linear part to a periodic pulse train.
#[derive(Debug, Clone)]
pub struct PulseResponse<S: Scalar> {
    sys: LtiSystem<S>,
    period: S,
    ainv_b: Matrix<S>,
    exp_at: Matrix<S>,
    periodic_lu: Lu<S>,
}

impl<S: Scalar> PulseResponse<S> {
    /// Shifts `sys` if needed.
    pub fn new(sys: &LtiSystem<S>, period: S) -> Result<Self> {
        if !(period > S::zero()) {
            return Err(Error::invalid("T", "must be > 0"));
        }
        let sys = sys.shift()?;
        let ainv_b = solve(sys.a(), sys.b())?;
        let exp_at = matexp(&sys.a().scale(period))?;
        let periodic_lu = Lu::new(&(&Matrix::identity(sys.dim()) - &exp_at))?;
        Ok(Self {
            sys,
            period,
            ainv_b,
            exp_at,
            periodic_lu,
        })
    }

    pub fn system(&self) -> &LtiSystem<S> {
        &self.sys
    }

    pub fn period(&self) -> S {
        self.period
    }

    /// Periodic initial state for pulse width `tau`.
    pub fn x_hat(&self, tau: S) -> Result<Matrix<S>> {
        let tail = matexp(&self.sys.a().scale(self.period - tau))?;
        let rhs = &(&self.exp_at - &tail) * &self.ainv_b;
        self.periodic_lu.solve(&rhs)
    }

    /// The periodic orbit for width `tau`; `x_hat(tau)` is computed once and
    /// reused for every evaluation along the orbit.
    pub fn orbit(&self, tau: S) -> Result<PeriodicOrbit<S>> {
        if !(tau >= S::zero() && tau <= self.period) {
            return Err(Error::invalid("tau", "must lie in [0, T]"));
        }
        let x_hat = self.x_hat(tau)?;
        let e_tau = matexp(&self.sys.a().scale(tau))?;
        let x_switch = &(&e_tau * &(&x_hat + &self.ainv_b)) - &self.ainv_b;
        Ok(PeriodicOrbit {
            sys: self.sys.clone(),
            period: self.period,
            tau,
            ainv_b: self.ainv_b.clone(),
            x_hat,
            x_switch,
        })
    }

    /// `sigma_hat(tau, t) = C e^{At} x_hat(tau) + psi + C (e^{At} - I) A^{-1} B`.
    pub fn sigma_hat(&self, tau: S, t: S) -> Result<S> {
        let x_hat = self.x_hat(tau)?;
        self.sigma_hat_from(&x_hat, t)
    }

    fn sigma_hat_from(&self, x_hat: &Matrix<S>, t: S) -> Result<S> {
        let e = matexp(&self.sys.a().scale(t))?;
        let x = &(&e * &(x_hat + &self.ainv_b)) - &self.ainv_b;
        Ok(self.sys.sigma(&x))
    }
}

/// `sigma_hat(tau, t)` for the shifted system.
pub fn sigma_hat<S: Scalar>(sys: &LtiSystem<S>, ramp: &RampParams<S>, tau: S, t: S) -> Result<S> {
    PulseResponse::new(sys, ramp.period)?.sigma_hat(tau, t)
}

/// Periodic solution of the shifted linear part under a fixed pulse width.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit<S: Scalar> {
    sys: LtiSystem<S>,
    period: S,
    tau: S,
    ainv_b: Matrix<S>,
    x_hat: Matrix<S>,
    x_switch: Matrix<S>,
}

impl<S: Scalar> PeriodicOrbit<S> {
    pub fn tau(&self) -> S {
        self.tau
    }

    pub fn period(&self) -> S {
        self.period
    }

    pub fn system(&self) -> &LtiSystem<S> {
        &self.sys
    }

    /// Shifted state at the start of the period.
    pub fn x_hat(&self) -> &Matrix<S> {
        &self.x_hat
    }

    /// Shifted state at the switching instant.
    pub fn x_switch(&self) -> &Matrix<S> {
        &self.x_switch
    }

    fn wrap(&self, t: S) -> S {
        if t >= S::zero() && t <= self.period {
            t
        } else {
            let r = t % self.period;
            if r < S::zero() {
                r + self.period
            } else {
                r
            }
        }
    }

    /// Modulator output, right-continuous.
    pub fn f(&self, t: S) -> S {
        if self.wrap(t) < self.tau {
            S::one()
        } else {
            S::zero()
        }
    }

    /// Shifted state; `t` is reduced modulo `T`.
    pub fn shifted_state(&self, t: S) -> Matrix<S> {
        let t = self.wrap(t);
        let a = self.sys.a();
        if t < self.tau {
            let e = matexp(&a.scale(t)).expect("exponent bounded by A*T");
            &(&e * &(&self.x_hat + &self.ainv_b)) - &self.ainv_b
        } else {
            let e = matexp(&a.scale(t - self.tau)).expect("exponent bounded by A*T");
            &e * &self.x_switch
        }
    }

    /// State in the original (unshifted) coordinates.
    pub fn state(&self, t: S) -> Matrix<S> {
        self.sys.to_original(&self.shifted_state(t))
    }

    pub fn sigma(&self, t: S) -> S {
        self.sys.sigma(&self.shifted_state(t))
    }

    /// Right derivative of `sigma`.
    pub fn dsigma(&self, t: S) -> S {
        let x = self.shifted_state(t);
        (self.sys.c() * &self.sys.derivative(&x, self.f(t))).as_scalar()
    }

    /// Derivative of `sigma` approaching `t` from the left (on-branch at the
    /// switching instant).
    pub fn dsigma_left(&self, t: S) -> S {
        let t = self.wrap(t);
        if t > S::zero() && t <= self.tau {
            let a = self.sys.a();
            let e = matexp(&a.scale(t)).expect("exponent bounded by A*T");
            let x = &(&e * &(&self.x_hat + &self.ainv_b)) - &self.ainv_b;
            (self.sys.c() * &self.sys.derivative(&x, S::one())).as_scalar()
        } else {
            self.dsigma(t)
        }
    }

    /// Time average of the shifted state over one period, in closed form.
    pub fn mean_shifted_state(&self) -> Result<Matrix<S>> {
        let a = self.sys.a();
        let n = self.sys.dim();
        let ident = Matrix::identity(n);
        let e_on = matexp(&a.scale(self.tau))?;
        let e_off = matexp(&a.scale(self.period - self.tau))?;
        let on = &solve(a, &(&(&e_on - &ident) * &(&self.x_hat + &self.ainv_b)))? - &self.ainv_b.scale(self.tau);
        let off = solve(a, &(&(&e_off - &ident) * &self.x_switch))?;
        Ok((&on + &off).scale(S::one() / self.period))
    }

    pub fn mean_state(&self) -> Result<Matrix<S>> {
        Ok(self.sys.to_original(&self.mean_shifted_state()?))
    }

    /// Maximum of `|d sigma / dt|` over the period: a uniform grid of `grid`
    /// intervals, both one-sided values at the switching instant, then a
    /// golden-section refinement around the best grid point.
    pub fn max_abs_dsigma(&self, grid: usize) -> S {
        let grid = grid.max(2);
        let h = self.period / S::of_usize(grid);
        let samples: Vec<(S, S)> = (0..=grid)
            .into_par_iter()
            .map(|k| {
                let t = h * S::of_usize(k);
                (t, self.dsigma(t).abs())
            })
            .collect();
        let mut best = samples
            .iter()
            .copied()
            .fold((S::zero(), S::neg_infinity()), |b, c| if c.1 > b.1 { c } else { b });
        for v in [self.dsigma_left(self.tau).abs(), self.dsigma(self.tau).abs()] {
            if v > best.1 {
                best = (self.tau, v);
            }
        }
        let (t_best, v_best) = best;
        // refine inside the smooth branch containing the grid maximum
        let (lo, hi) = if t_best < self.tau {
            (S::zero().max(t_best - h), self.tau.min(t_best + h))
        } else {
            (self.tau.max(t_best - h), self.period.min(t_best + h))
        };
        let on_branch = t_best < self.tau;
        let eval = |t: S| {
            if on_branch {
                self.dsigma_left(t.max(S::EPS_T(self.period))).abs()
            } else {
                self.dsigma(t).abs()
            }
        };
        let refined = golden_max(eval, lo, hi, 60);
        v_best.max(refined)
    }
}

/// Extension used to nudge `t = 0` off the branch boundary.
trait PeriodEps: Scalar {
    #[allow(non_snake_case)]
    fn EPS_T(period: Self) -> Self {
        period * Self::lit(Self::EPS)
    }
}
impl<S: Scalar> PeriodEps for S {}

fn golden_max<S: Scalar>(f: impl Fn(S) -> S, mut lo: S, mut hi: S, iters: usize) -> S {
    let g = S::lit(GOLDEN);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = f(lo).max(f(hi)).max(f1).max(f2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
            best = best.max(f2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
            best = best.max(f1);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L1Source {
    /// Maximum slope along the mode itself.
    Analytic,
    /// Worst case of the open-loop duty-ratio sweep.
    OpenLoopSweep,
    /// Supplied by the caller.
    UserSupplied,
}

/// An unsaturated T-periodic operating mode.
#[derive(Debug, Clone)]
pub struct PeriodicMode<S: Scalar> {
    orbit: PeriodicOrbit<S>,
    ramp: RampParams<S>,
    /// Minimum of `sigma_hat(tau0, t) - Phi(t)` over the check grid on `[0, tau0)`.
    pub margin: S,
    /// `sigma_star / T - d sigma / dt (tau0^-)`; positive for a transversal crossing.
    pub crossing_slope: S,
    /// Bound on `|d sigma0 / dt|`, volts per second.
    pub l1: S,
    pub l1_source: L1Source,
    /// Maximum `|d sigma0 / dt|` along the mode.
    pub l1_analytic: S,
    /// Set when the strict inequality holds only within tolerance.
    pub grazing: bool,
}

impl<S: Scalar> PeriodicMode<S> {
    pub fn tau0(&self) -> S {
        self.orbit.tau
    }

    pub fn duty(&self) -> S {
        self.orbit.tau / self.orbit.period
    }

    pub fn ramp(&self) -> &RampParams<S> {
        &self.ramp
    }

    pub fn orbit(&self) -> &PeriodicOrbit<S> {
        &self.orbit
    }

    /// Shifted initial state `x~0(0)`.
    pub fn x_hat(&self) -> &Matrix<S> {
        &self.orbit.x_hat
    }

    pub fn sigma0(&self, t: S) -> S {
        self.orbit.sigma(t)
    }

    /// `x0(t)` in the original coordinates.
    pub fn x0(&self, t: S) -> Matrix<S> {
        self.orbit.state(t)
    }

    pub fn f0(&self, t: S) -> S {
        self.orbit.f(t)
    }

    /// `|sigma0(tau0) - Phi(tau0)|`.
    pub fn residual(&self) -> S {
        (self.orbit.sigma(self.orbit.tau) - self.ramp.phi(self.orbit.tau)).abs()
    }

    /// Period average of the physical output voltage, if the system carries
    /// an output row.
    pub fn mean_output(&self) -> Result<Option<S>> {
        match self.orbit.sys.output_row() {
            Some(row) => Ok(Some((row * &self.orbit.mean_state()?).as_scalar())),
            None => Ok(None),
        }
    }

    /// `T * L1`, volts.
    pub fn t_l1(&self) -> S {
        self.ramp.period * self.l1
    }

    /// Replaces the slope bound. Values below the slope actually attained
    /// along the mode are rejected.
    pub fn with_l1(mut self, l1: S, source: L1Source) -> Result<Self> {
        let floor = self.l1_analytic * (S::one() - S::lit(1e-9));
        if !(l1.is_finite() && l1 >= floor) {
            return Err(Error::invalid(
                "L1",
                format!("{l1} is below the slope attained along the mode ({})", self.l1_analytic),
            ));
        }
        self.l1 = l1;
        self.l1_source = source;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectedRoot<S> {
    /// Candidate pulse width, seconds.
    pub tau: S,
    /// Time of the most negative margin on `[0, tau)`, seconds.
    pub violation_time: S,
    /// `sigma_hat(tau, t) - Phi(t)` there, volts.
    pub margin: S,
}

#[derive(Debug, Clone)]
pub struct ExistenceReport<S: Scalar> {
    /// `sigma1 < psi < sigma1 + sigma_star + C A^{-1} B` for the shifted system.
    pub ineq25_holds: bool,
    pub psi: S,
    pub upper_bound: S,
    /// Ascending in `tau0`.
    pub modes: Vec<PeriodicMode<S>>,
    pub rejected_roots: Vec<RejectedRoot<S>>,
    pub warnings: Vec<String>,
}

/// Scans `g(tau) = sigma_hat(tau, tau) - Phi(tau)` for roots and keeps those
/// satisfying the strict ramp inequality before the crossing.
pub fn find_modes<S: Scalar>(
    sys: &LtiSystem<S>,
    ramp: &RampParams<S>,
    search: &ModeSearch,
) -> Result<ExistenceReport<S>> {
    ramp.validate()?;
    let pr = PulseResponse::new(sys, ramp.period)?;
    let shifted = pr.system();
    let psi = shifted.psi();
    let upper_bound = ramp.sigma1 + ramp.sigma_star + shifted.c_ainv_b()?;
    let ineq25_holds = ramp.sigma1 < psi && psi < upper_bound;

    let n = search.n_scan.max(4);
    let period = ramp.period;
    let g = |tau: S| -> Result<S> { Ok(pr.sigma_hat(tau, tau)? - ramp.phi(tau)) };
    let grid: Vec<S> = (1..n).map(|i| period * S::of_usize(i) / S::of_usize(n)).collect();
    let values: Vec<S> = grid.par_iter().map(|&tau| g(tau)).collect::<Result<_>>()?;

    let root_tol = S::lit(search.root_tol) * ramp.sigma_star;
    let mut roots = Vec::new();
    for i in 0..values.len() - 1 {
        let (g0, g1) = (values[i], values[i + 1]);
        if g0 == S::zero() {
            roots.push(grid[i]);
            continue;
        }
        if g0 * g1 >= S::zero() {
            continue;
        }
        let (mut lo, mut hi, mut glo) = (grid[i], grid[i + 1], g0);
        let mut mid = (lo + hi) * S::lit(0.5);
        for _ in 0..200 {
            mid = (lo + hi) * S::lit(0.5);
            let gm = g(mid)?;
            if gm.abs() <= root_tol || hi - lo <= period * S::lit(S::EPS) {
                break;
            }
            if (gm > S::zero()) == (glo > S::zero()) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        roots.push(mid);
    }
    if let Some(&last) = values.last() {
        if last == S::zero() {
            roots.push(*grid.last().unwrap());
        }
    }

    let mut modes = Vec::new();
    let mut rejected_roots = Vec::new();
    let mut warnings = Vec::new();
    let margin_floor = S::lit(search.margin_tol) * ramp.sigma_star;
    for tau in roots {
        let orbit = pr.orbit(tau)?;
        let (margin, worst_t) = ramp_margin(&orbit, ramp, search.n_check);
        if margin > margin_floor {
            let mode = finish_mode(orbit, ramp, margin, search)?;
            if mode.grazing {
                warnings.push(format!(
                    "mode at tau0 = {} s touches the ramp before switching (margin {} V)",
                    mode.tau0(),
                    margin
                ));
            }
            modes.push(mode);
        } else {
            rejected_roots.push(RejectedRoot {
                tau,
                violation_time: worst_t,
                margin,
            });
        }
    }
    if modes.len() > 1 {
        warnings.push(format!("{} coexisting periodic modes", modes.len()));
    }
    Ok(ExistenceReport {
        ineq25_holds,
        psi,
        upper_bound,
        modes,
        rejected_roots,
        warnings,
    })
}

/// Minimum of `sigma_hat(tau, t) - Phi(t)` over `n` uniform points of
/// `[0, tau)`, with the time where it occurs.
pub fn ramp_margin<S: Scalar>(orbit: &PeriodicOrbit<S>, ramp: &RampParams<S>, n: usize) -> (S, S) {
    let n = n.max(1);
    let tau = orbit.tau;
    (0..n)
        .into_par_iter()
        .map(|j| {
            let t = tau * S::of_usize(j) / S::of_usize(n);
            (orbit.sigma(t) - ramp.phi(t), t)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((S::infinity(), S::zero()), |b, c| if c.0 < b.0 { c } else { b })
}

fn finish_mode<S: Scalar>(
    orbit: PeriodicOrbit<S>,
    ramp: &RampParams<S>,
    margin: S,
    search: &ModeSearch,
) -> Result<PeriodicMode<S>> {
    let crossing_slope = ramp.slope() - orbit.dsigma_left(orbit.tau);
    let l1 = orbit.max_abs_dsigma(search.l1_grid);
    let grazing = margin <= S::lit(search.margin_tol.abs()) * ramp.sigma_star
        || crossing_slope <= S::lit(search.margin_tol.abs()) * ramp.slope();
    Ok(PeriodicMode {
        orbit,
        ramp: *ramp,
        margin,
        crossing_slope,
        l1,
        l1_source: L1Source::Analytic,
        l1_analytic: l1,
        grazing,
    })
}

/// Rebuilds the mode for a known pulse width and checks its defining
/// identities.
pub fn reconstruct<S: Scalar>(
    sys: &LtiSystem<S>,
    ramp: &RampParams<S>,
    tau0: S,
    search: &ModeSearch,
) -> Result<PeriodicMode<S>> {
    if !(tau0 > S::zero() && tau0 < ramp.period) {
        return Err(Error::invalid("tau0", "must lie in (0, T)"));
    }
    let pr = PulseResponse::new(sys, ramp.period)?;
    let orbit = pr.orbit(tau0)?;
    let tol = S::lit(1e-9) * ramp.sigma_star;
    let residual = (orbit.sigma(tau0) - ramp.phi(tau0)).abs();
    if residual > tol {
        return Err(Error::invalid(
            "tau0",
            format!("sigma0(tau0) misses the ramp by {residual} V"),
        ));
    }
    let end = orbit.shifted_state(ramp.period);
    let drift = (&end - orbit.x_hat()).max_abs();
    if drift > S::lit(1e-9) * orbit.x_hat().max_abs().max(S::one()) {
        return Err(Error::invalid("tau0", format!("orbit does not close (drift {drift})")));
    }
    let (margin, _) = ramp_margin(&orbit, ramp, search.n_check);
    finish_mode(orbit, ramp, margin, search)
}

/// `T * max |d sigma / dt|` along the periodic response to a fixed duty ratio.
pub fn l1_analytic<S: Scalar>(mode: &PeriodicMode<S>, grid: usize) -> S {
    mode.orbit.max_abs_dsigma(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L1Table<S> {
    /// `(duty, T * L1 in volts)` rows.
    pub rows: Vec<(S, S)>,
    /// Largest `T * L1` in the table, volts.
    pub worst_t_l1: S,
}

/// Open-loop duty sweep for an assembled system: for each duty ratio the
/// linear part is driven by the fixed pulse train from its periodic state and
/// `T * max |d sigma / dt|` is recorded.
pub fn l1_sweep_for_system<S: Scalar>(
    sys: &LtiSystem<S>,
    period: S,
    duties: &[S],
    grid: usize,
) -> Result<L1Table<S>> {
    if duties.iter().any(|&d| !(d > S::zero() && d < S::one())) {
        return Err(Error::invalid("duty_grid", "duties must lie in (0, 1)"));
    }
    if duties.is_empty() {
        return Err(Error::invalid("duty_grid", "empty"));
    }
    let pr = PulseResponse::new(sys, period)?;
    let rows: Vec<(S, S)> = duties
        .par_iter()
        .map(|&d| {
            let orbit = pr.orbit(d * period)?;
            Ok((d, period * orbit.max_abs_dsigma(grid)))
        })
        .collect::<Result<_>>()?;
    let worst_t_l1 = rows.iter().map(|r| r.1).fold(S::zero(), S::max);
    Ok(L1Table { rows, worst_t_l1 })
}

pub fn l1_open_loop_sweep<S: Scalar>(
    p: &PowerStageParams<S>,
    control: &ControlConfig<S>,
    ramp: &RampParams<S>,
    duties: &[S],
) -> Result<L1Table<S>> {
    let sys = assemble(p, control)?;
    l1_sweep_for_system(&sys, ramp.period, duties, ModeSearch::default().l1_grid)
}

/// Where the slope bound used by the stability test comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum L1Policy {
    /// Worst case of the open-loop duty sweep over `duties`.
    OpenLoopSweep { duties: Vec<f64> },
    /// Maximum slope along the selected mode.
    Analytic,
    /// A fixed `T * L1`, volts.
    Fixed { t_l1: f64 },
}

impl Default for L1Policy {
    fn default() -> Self {
        L1Policy::OpenLoopSweep {
            duties: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Choice<S> {
    /// V/s.
    pub l1: S,
    pub source: L1Source,
    pub table: Option<L1Table<S>>,
    pub warnings: Vec<String>,
}

/// Picks the slope bound for `mode`. A sweep result below the slope attained
/// along the mode is raised to it; a fixed value below it is an error.
pub fn select_l1<S: Scalar>(
    mode: &PeriodicMode<S>,
    policy: &L1Policy,
    table: Option<&L1Table<S>>,
    search: &ModeSearch,
) -> Result<L1Choice<S>> {
    let period = mode.ramp().period;
    let analytic = mode.l1_analytic;
    let mut warnings = Vec::new();
    let (l1, source, table) = match policy {
        L1Policy::Analytic => (analytic, L1Source::Analytic, None),
        L1Policy::Fixed { t_l1 } => {
            let l1 = S::lit(*t_l1) / period;
            mode.clone().with_l1(l1, L1Source::UserSupplied)?;
            (l1, L1Source::UserSupplied, None)
        }
        L1Policy::OpenLoopSweep { duties } => {
            let table = match table {
                Some(t) => t.clone(),
                None => {
                    let d: Vec<S> = duties.iter().map(|&x| S::lit(x)).collect();
                    l1_sweep_for_system(mode.orbit().system(), period, &d, search.l1_grid)?
                }
            };
            let l1 = table.worst_t_l1 / period;
            if l1 < analytic {
                warnings.push(format!(
                    "open-loop sweep T*L1 = {} V is below the slope along the mode ({} V); using the latter",
                    table.worst_t_l1,
                    analytic * period
                ));
                (analytic, L1Source::Analytic, Some(table))
            } else {
                (l1, L1Source::OpenLoopSweep, Some(table))
            }
        }
    };
    Ok(L1Choice {
        l1,
        source,
        table,
        warnings,
    })
}

/// Ripple-free estimate `U0 = Vs (a Vref - sigma1) / (sigma_star + a Vs)`.
pub fn approx_output<S: Scalar>(p: &PowerStageParams<S>, control: &ControlConfig<S>, ramp: &RampParams<S>) -> Result<S> {
    match control {
        ControlConfig::Proportional { a, vref } => {
            Ok(p.vs * (*a * *vref - ramp.sigma1) / (ramp.sigma_star + *a * p.vs))
        }
        ControlConfig::FullLoop { .. } => Err(Error::invalid(
            "control",
            "the averaged output estimate needs proportional control",
        )),
    }
}

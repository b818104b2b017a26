//! Closed loop under latched natural-sampling trailing-edge PWM.
//!
//! Each period starts with `f = 1`; the pulse ends at the first crossing of
//! the ramp by `sigma` (at most one switch per period). The state is
//! propagated exactly with matrix exponentials on both sub-intervals.

mod diagnostics;

pub use diagnostics::{diagnostics, random_starts, simulate_ensemble, Diagnostics};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LtiSystem, RampParams};
use crate::numerics::{matexp, solve, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig<S> {
    /// Initial state in the original coordinates.
    pub x0: Vec<S>,
    pub periods: usize,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    /// Bisection tolerance on the switching instant, relative to `T`.
    #[serde(default = "default_event_tol")]
    pub event_tol: f64,
    /// Grid used to bracket the first ramp crossing.
    #[serde(default = "default_event_grid")]
    pub event_grid: usize,
}

fn default_samples() -> usize {
    256
}
fn default_event_tol() -> f64 {
    1e-12
}
fn default_event_grid() -> usize {
    1024
}

impl<S: Scalar> SimConfig<S> {
    pub fn new(x0: Vec<S>, periods: usize) -> Self {
        Self {
            x0,
            periods,
            samples_per_period: default_samples(),
            event_tol: default_event_tol(),
            event_grid: default_event_grid(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.periods < 1 {
            return Err(Error::invalid("periods", "must be at least 1"));
        }
        if self.samples_per_period < 16 {
            return Err(Error::invalid("samples_per_period", "must be at least 16"));
        }
        if self.x0.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "x0 has {} entries, the system has {dim} states",
                self.x0.len()
            )));
        }
        if self.x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("x0"));
        }
        if !(self.event_tol > 0.0 && self.event_tol < 1e-3) {
            return Err(Error::invalid("event_tol", "must lie in (0, 1e-3)"));
        }
        if self.event_grid < 2 {
            return Err(Error::invalid("event_grid", "must be at least 2"));
        }
        Ok(())
    }
}

/// Outcome of the switching-instant search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Switch<S> {
    /// Pulse width, seconds.
    pub tau: S,
    /// A grid minimum touched the ramp without crossing it.
    pub tangential: bool,
}

/// Exact on-branch evaluation of `h(t) = sigma(nT + t) - Phi(t)` for a
/// shifted system.
pub struct SwitchingKernel<S: Scalar> {
    sys: LtiSystem<S>,
    ramp: RampParams<S>,
    ainv_b: Matrix<S>,
    /// `C e^{A t_j}` on the event grid.
    rows: Vec<Matrix<S>>,
    grid: usize,
    event_tol: S,
}

impl<S: Scalar> SwitchingKernel<S> {
    pub fn new(sys: &LtiSystem<S>, ramp: &RampParams<S>, grid: usize, event_tol: f64) -> Result<Self> {
        let sys = sys.shift()?;
        let ainv_b = solve(sys.a(), sys.b())?;
        let grid = grid.max(2);
        let h = ramp.period / S::of_usize(grid);
        let step = matexp(&sys.a().scale(h))?;
        let mut rows = Vec::with_capacity(grid + 1);
        let mut e = Matrix::identity(sys.dim());
        for j in 0..=grid {
            if j % 64 == 0 {
                // re-anchor to keep accumulated rounding at machine level
                e = matexp(&sys.a().scale(h * S::of_usize(j)))?;
            }
            rows.push(sys.c() * &e);
            e = &step * &e;
        }
        Ok(Self {
            sys,
            ramp: *ramp,
            ainv_b,
            rows,
            grid,
            event_tol: S::lit(event_tol) * ramp.period,
        })
    }

    pub fn system(&self) -> &LtiSystem<S> {
        &self.sys
    }

    /// On-branch state at `t` from `x` at the period start (shifted).
    pub fn on_state(&self, x: &Matrix<S>, t: S) -> Matrix<S> {
        let e = matexp(&self.sys.a().scale(t)).expect("exponent bounded by A*T");
        &(&e * &(x + &self.ainv_b)) - &self.ainv_b
    }

    /// Off-branch state at `t >= tau` from the switching state.
    pub fn off_state(&self, x_tau: &Matrix<S>, tau: S, t: S) -> Matrix<S> {
        let e = matexp(&self.sys.a().scale(t - tau)).expect("exponent bounded by A*T");
        &e * x_tau
    }

    fn h_exact(&self, x: &Matrix<S>, t: S) -> S {
        self.sys.sigma(&self.on_state(x, t)) - self.ramp.phi(t)
    }

    /// First crossing of the ramp, with the saturation rules: `tau = 0` when
    /// `sigma(nT) <= sigma1`, `tau = T` when `sigma` stays above the ramp.
    pub fn switching_time(&self, x: &Matrix<S>) -> Switch<S> {
        let shifted = x + &self.ainv_b;
        let base = self.sys.psi() - (self.sys.c() * &self.ainv_b).as_scalar();
        let h_grid = |j: usize| -> S {
            let t = self.ramp.period * S::of_usize(j) / S::of_usize(self.grid);
            (&self.rows[j] * &shifted).as_scalar() + base - self.ramp.phi(t)
        };
        let h0 = self.sys.sigma(x) - self.ramp.sigma1;
        if h0 <= S::zero() {
            return Switch {
                tau: S::zero(),
                tangential: false,
            };
        }
        let touch_tol = S::lit(1e-9) * self.ramp.sigma_star;
        let mut tangential = false;
        let mut prev = h0;
        let mut prev2 = S::infinity();
        for j in 1..=self.grid {
            let hj = h_grid(j);
            if hj <= S::zero() {
                let t_hi = self.ramp.period * S::of_usize(j) / S::of_usize(self.grid);
                if hj == S::zero() {
                    return Switch { tau: t_hi, tangential };
                }
                let t_lo = self.ramp.period * S::of_usize(j - 1) / S::of_usize(self.grid);
                return Switch {
                    tau: self.bisect(x, t_lo, t_hi),
                    tangential,
                };
            }
            if prev < prev2 && prev <= hj && prev < touch_tol {
                tangential = true;
            }
            prev2 = prev;
            prev = hj;
        }
        Switch {
            tau: self.ramp.period,
            tangential,
        }
    }

    fn bisect(&self, x: &Matrix<S>, mut lo: S, mut hi: S) -> S {
        for _ in 0..200 {
            if hi - lo <= self.event_tol {
                break;
            }
            let mid = (lo + hi) * S::lit(0.5);
            if self.h_exact(x, mid) > S::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `tau_n` for a period starting from `x_start` (original coordinates).
pub fn switching_time<S: Scalar>(sys: &LtiSystem<S>, ramp: &RampParams<S>, x_start: &[S]) -> Result<S> {
    let k = SwitchingKernel::new(sys, ramp, default_event_grid(), default_event_tol())?;
    let x = k.system().from_original(&Matrix::column(x_start));
    Ok(k.switching_time(&x).tau)
}

/// Recorded closed-loop trajectory. States are in the original coordinates.
#[derive(Debug, Clone)]
pub struct SimTrace<S: Scalar> {
    pub period: S,
    /// Sample times, seconds.
    pub t: Vec<S>,
    pub x: Vec<Vec<S>>,
    /// Volts.
    pub sigma: Vec<S>,
    pub f: Vec<S>,
    pub period_index: Vec<usize>,
    /// Pulse width of each period, seconds.
    pub tau: Vec<S>,
    /// `x(nT)` for `n = 0..=periods`.
    pub x_period_start: Vec<Vec<S>>,
    /// Periods in which the control signal touched the ramp without crossing.
    pub tangential_touches: usize,
    sys: LtiSystem<S>,
    ramp: RampParams<S>,
}

impl<S: Scalar> SimTrace<S> {
    pub fn periods(&self) -> usize {
        self.tau.len()
    }

    pub fn ramp(&self) -> &RampParams<S> {
        &self.ramp
    }

    /// Shifted system the trace was produced with.
    pub fn system(&self) -> &LtiSystem<S> {
        &self.sys
    }

    /// Exact `sigma` at `nT + s`, `0 <= s <= T`.
    pub fn sigma_at(&self, n: usize, s: S) -> S {
        let x0 = self.sys.from_original(&Matrix::column(&self.x_period_start[n]));
        let sys = &self.sys;
        let ainv_b = solve(sys.a(), sys.b()).expect("A is Hurwitz");
        let tau = self.tau[n];
        let on = |t: S| {
            let e = matexp(&sys.a().scale(t)).expect("exponent bounded by A*T");
            &(&e * &(&x0 + &ainv_b)) - &ainv_b
        };
        let x = if s < tau {
            on(s)
        } else {
            let e = matexp(&sys.a().scale(s - tau)).expect("exponent bounded by A*T");
            &e * &on(tau)
        };
        sys.sigma(&x)
    }

    /// CSV with header `t,x_1..x_m,sigma,f,period_index`; 12 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.x.first().map_or(0, Vec::len);
        let mut header = String::from("t");
        for i in 1..=m {
            header.push_str(&format!(",x_{i}"));
        }
        header.push_str(",sigma,f,period_index");
        writeln!(w, "{header}")?;
        for k in 0..self.t.len() {
            let mut line = format!("{:.11e}", self.t[k].as_f64());
            for v in &self.x[k] {
                line.push_str(&format!(",{:.11e}", v.as_f64()));
            }
            line.push_str(&format!(
                ",{:.11e},{},{}",
                self.sigma[k].as_f64(),
                self.f[k].as_f64(),
                self.period_index[k]
            ));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub fn simulate<S: Scalar>(sys: &LtiSystem<S>, ramp: &RampParams<S>, cfg: &SimConfig<S>) -> Result<SimTrace<S>> {
    ramp.validate()?;
    cfg.validate(sys.dim())?;
    let kernel = SwitchingKernel::new(sys, ramp, cfg.event_grid, cfg.event_tol)?;
    let shifted = kernel.system().clone();
    let period = ramp.period;
    let spp = cfg.samples_per_period;
    let h = period / S::of_usize(spp);
    let grid: Vec<Matrix<S>> = (0..spp)
        .map(|k| matexp(&shifted.a().scale(h * S::of_usize(k))))
        .collect::<Result<_>>()?;
    let ainv_b = solve(shifted.a(), shifted.b())?;

    let n_samples = cfg.periods * spp;
    let mut t = Vec::with_capacity(n_samples);
    let mut xs = Vec::with_capacity(n_samples);
    let mut sigma = Vec::with_capacity(n_samples);
    let mut f = Vec::with_capacity(n_samples);
    let mut period_index = Vec::with_capacity(n_samples);
    let mut tau = Vec::with_capacity(cfg.periods);
    let mut starts = Vec::with_capacity(cfg.periods + 1);
    let mut touches = 0;

    let mut x = shifted.from_original(&Matrix::column(&cfg.x0));
    for n in 0..cfg.periods {
        starts.push(shifted.to_original(&x).into_vec());
        let sw = kernel.switching_time(&x);
        touches += usize::from(sw.tangential);
        let x_tau = kernel.on_state(&x, sw.tau);
        let t0 = period * S::of_usize(n);
        for (k, e) in grid.iter().enumerate() {
            let s = h * S::of_usize(k);
            let (state, fk) = if s < sw.tau {
                (&(e * &(&x + &ainv_b)) - &ainv_b, S::one())
            } else {
                (kernel.off_state(&x_tau, sw.tau, s), S::zero())
            };
            t.push(t0 + s);
            sigma.push(shifted.sigma(&state));
            xs.push(shifted.to_original(&state).into_vec());
            f.push(fk);
            period_index.push(n);
        }
        tau.push(sw.tau);
        x = kernel.off_state(&x_tau, sw.tau, period);
    }
    starts.push(shifted.to_original(&x).into_vec());
    Ok(SimTrace {
        period,
        t,
        x: xs,
        sigma,
        f,
        period_index,
        tau,
        x_period_start: starts,
        tangential_touches: touches,
        sys: shifted,
        ramp: *ramp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, ControlConfig, PowerStageParams};
    use crate::periodic::{find_modes, ModeSearch};

    fn buck(vref: f64) -> (LtiSystem<f64>, RampParams<f64>) {
        let p = PowerStageParams::new(22.0, 47e-6, 20e-3, 20.0).unwrap();
        let sys = assemble(&p, &ControlConfig::Proportional { a: 1.0, vref }).unwrap();
        (sys, RampParams::new(4.0, 18.0, 400e-6).unwrap())
    }

    fn static_system(sigma: f64) -> LtiSystem<f64> {
        LtiSystem::new(
            Matrix::scalar(-1.0),
            Matrix::scalar(0.0),
            Matrix::scalar(0.0),
            sigma,
            Matrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn saturation_rules_and_linear_crossing() {
        let ramp = RampParams::new(4.0, 18.0, 400e-6).unwrap();
        assert_eq!(switching_time(&static_system(4.0), &ramp, &[0.0]).unwrap(), 0.0);
        assert_eq!(switching_time(&static_system(3.0), &ramp, &[0.0]).unwrap(), 0.0);
        let tau = switching_time(&static_system(4.0 + 9.0), &ramp, &[0.0]).unwrap();
        assert!((tau - 200e-6).abs() <= 1e-12 * 400e-6 * 2.0);
        assert_eq!(switching_time(&static_system(30.0), &ramp, &[0.0]).unwrap(), 400e-6);
    }

    #[test]
    fn mode_start_reproduces_pulse_width() {
        let (sys, ramp) = buck(13.5);
        let mode = find_modes(&sys, &ramp, &ModeSearch::default()).unwrap().modes.remove(0);
        let x0 = mode.x0(0.0).into_vec();
        let tau = switching_time(&sys, &ramp, &x0).unwrap();
        assert!((tau - mode.tau0()).abs() <= 1e-9 * ramp.period);
        let trace = simulate(&sys, &ramp, &SimConfig::new(x0.clone(), 50)).unwrap();
        for xs in &trace.x_period_start {
            let d: f64 = xs.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d <= 1e-8, "drift {d}");
        }
    }

    #[test]
    fn latch_one_pulse_per_period() {
        let (sys, ramp) = buck(13.5);
        let trace = simulate(&sys, &ramp, &SimConfig::new(vec![0.0, 0.0], 30)).unwrap();
        for n in 0..trace.periods() {
            let fs: Vec<f64> = (0..trace.t.len())
                .filter(|&k| trace.period_index[k] == n)
                .map(|k| trace.f[k])
                .collect();
            let rises = fs.windows(2).filter(|w| w[0] == 0.0 && w[1] == 1.0).count();
            assert_eq!(rises, 0, "second pulse in period {n}");
            assert!(fs.iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(trace.tau[n] >= 0.0 && trace.tau[n] <= ramp.period);
        }
    }

    #[test]
    fn sampling_density_does_not_change_the_trajectory() {
        let (sys, ramp) = buck(13.5);
        let mut cfg = SimConfig::new(vec![0.1, 7.0], 40);
        let a = simulate(&sys, &ramp, &cfg).unwrap();
        cfg.samples_per_period *= 2;
        let b = simulate(&sys, &ramp, &cfg).unwrap();
        for (xa, xb) in a.x_period_start.iter().zip(&b.x_period_start) {
            for (p, q) in xa.iter().zip(xb) {
                assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
            }
        }
    }

    #[test]
    fn forced_off_decays_to_equilibrium() {
        // a Vref = 3 < sigma1: the modulator never switches on
        let (sys, ramp) = buck(3.0);
        let trace = simulate(&sys, &ramp, &SimConfig::new(vec![0.0, 0.5], 200)).unwrap();
        assert!(trace.tau.iter().all(|&t| t == 0.0));
        let shifted = sys.shift().unwrap();
        let last = shifted.from_original(&Matrix::column(trace.x_period_start.last().unwrap()));
        assert!(last.max_abs() < 1e-9, "{last:?}");
        assert!(trace.f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_layout() {
        let (sys, ramp) = buck(13.5);
        let trace = simulate(&sys, &ramp, &SimConfig::new(vec![0.0, 5.0], 1)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x_1,x_2,sigma,f,period_index");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 6);
        assert_eq!(first[0], "0.00000000000e0");
        assert_eq!(text.lines().count(), 257);
    }

    #[test]
    fn config_validation() {
        let (sys, ramp) = buck(13.5);
        assert!(simulate(&sys, &ramp, &SimConfig::new(vec![0.0], 5)).is_err());
        assert!(simulate(&sys, &ramp, &SimConfig::new(vec![0.0, 0.0], 0)).is_err());
        let mut cfg = SimConfig::new(vec![0.0, 0.0], 1);
        cfg.samples_per_period = 8;
        assert!(simulate(&sys, &ramp, &cfg).is_err());
    }
}

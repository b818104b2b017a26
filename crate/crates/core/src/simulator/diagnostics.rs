//! Per-period comparison of a trace with a periodic mode: pulse-width
//! deviation `v_n`, the integrated difference `u`, and the sector condition
//! linking `v_n` to the output difference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate, SimConfig, SimTrace};
use crate::error::Result;
use crate::model::{LtiSystem, RampParams};
use crate::periodic::PeriodicMode;
use crate::scalar::Scalar;

/// `v_n` below this magnitude is treated as zero.
const V_ZERO: f64 = 1e-8;
/// Extra exact evaluations between `tau_n` and `tau0` for the sector search.
const SECTOR_REFINE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorCheck<S> {
    /// `sigma_star - T L1`, volts.
    pub slack_v: S,
    /// False when `slack_v <= 0`; no period is checked then.
    pub applicable: bool,
    pub checked_periods: usize,
    /// Periods with `v_n != 0` where no instant satisfied the sector bound.
    pub failures: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<S> {
    /// `(tau_n - tau0) / T`.
    pub v: Vec<S>,
    /// `||x(nT) - x0(0)||` for `n = 0..=periods`.
    pub deviation: Vec<S>,
    /// `u` at the trace sample times.
    pub u: Vec<S>,
    /// Largest `max |u| / (T |v_n|)` over periods with `v_n != 0`.
    pub max_u_ratio: S,
    /// Largest `int u^2 / ((T^2 / 3) int v^2)` per period.
    pub max_l2_ratio: S,
    pub u_bound_holds: bool,
    pub l2_bound_holds: bool,
    pub sector: SectorCheck<S>,
    pub tangential_touches: usize,
}

impl<S: Scalar> Diagnostics<S> {
    /// First period from which the deviation stays below `tol`.
    pub fn settled(&self, tol: S) -> Option<usize> {
        let last_bad = self.deviation.iter().rposition(|&d| !(d < tol));
        match last_bad {
            None => Some(0),
            Some(k) if k + 1 < self.deviation.len() => Some(k + 1),
            _ => None,
        }
    }

    pub fn final_deviation(&self) -> S {
        *self.deviation.last().expect("at least one period")
    }
}

/// `u(s) = min(s, tau) - min(s, tau0) - v s` on one period.
fn u_at<S: Scalar>(s: S, tau: S, tau0: S, v: S) -> S {
    s.min(tau) - s.min(tau0) - v * s
}

pub fn diagnostics<S: Scalar>(trace: &SimTrace<S>, mode: &PeriodicMode<S>, t_l1: S) -> Result<Diagnostics<S>> {
    let period = trace.period;
    let tau0 = mode.tau0();
    let x_ref = mode.x0(S::zero()).into_vec();

    let deviation: Vec<S> = trace
        .x_period_start
        .iter()
        .map(|x| {
            x.iter()
                .zip(&x_ref)
                .map(|(&a, &b)| (a - b) * (a - b))
                .fold(S::zero(), |acc, d| acc + d)
                .sqrt()
        })
        .collect();
    let v: Vec<S> = trace.tau.iter().map(|&tau| (tau - tau0) / period).collect();

    let spp = trace.t.len() / trace.periods();
    let h = period / S::of_usize(spp);
    let u: Vec<S> = (0..trace.t.len())
        .map(|k| {
            let n = trace.period_index[k];
            u_at(h * S::of_usize(k % spp), trace.tau[n], tau0, v[n])
        })
        .collect();

    let rel = S::lit(1e-12);
    let mut max_u_ratio = S::zero();
    let mut max_l2_ratio = S::zero();
    let mut u_bound_holds = true;
    let mut l2_bound_holds = true;
    for (n, &vn) in v.iter().enumerate() {
        let tau = trace.tau[n];
        let mut knots = [S::zero(), tau.min(tau0), tau.max(tau0), period];
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let vals: Vec<S> = knots.iter().map(|&s| u_at(s, tau, tau0, vn)).collect();
        let max_u = vals.iter().fold(S::zero(), |m, x| m.max(x.abs()));
        // exact integral of a piecewise-linear square
        let mut l2 = S::zero();
        for i in 0..3 {
            let (a, b) = (vals[i], vals[i + 1]);
            l2 = l2 + (knots[i + 1] - knots[i]) * (a * a + a * b + b * b) / S::lit(3.0);
        }
        let rhs = period * period / S::lit(3.0) * vn * vn * period;
        let bound = period * vn.abs();
        if max_u > bound * (S::one() + rel) + S::lit(S::EPS) * period {
            u_bound_holds = false;
        }
        if l2 > rhs * (S::one() + rel) + S::lit(S::EPS) * period.powi(3) {
            l2_bound_holds = false;
        }
        if vn.abs() > S::lit(V_ZERO) {
            max_u_ratio = max_u_ratio.max(max_u / bound);
            max_l2_ratio = max_l2_ratio.max(l2 / rhs);
        }
    }

    let sector = sector_check(trace, mode, &v, t_l1, spp, h);
    Ok(Diagnostics {
        v,
        deviation,
        u,
        max_u_ratio,
        max_l2_ratio,
        u_bound_holds,
        l2_bound_holds,
        sector,
        tangential_touches: trace.tangential_touches,
    })
}

fn sector_check<S: Scalar>(
    trace: &SimTrace<S>,
    mode: &PeriodicMode<S>,
    v: &[S],
    t_l1: S,
    spp: usize,
    h: S,
) -> SectorCheck<S> {
    let slack = trace.ramp().sigma_star - t_l1;
    let mut out = SectorCheck {
        slack_v: slack,
        applicable: slack > S::zero(),
        checked_periods: 0,
        failures: Vec::new(),
    };
    if !out.applicable {
        return out;
    }
    let tau0 = mode.tau0();
    let sigma0_grid: Vec<S> = (0..spp).map(|k| mode.sigma0(h * S::of_usize(k))).collect();
    // 0 <= v / sigma_d <= 1 / slack  <=>  sign(sigma_d) = sign(v) and |sigma_d| >= slack |v|
    let ok = |vn: S, sd: S| sd * vn > S::zero() && sd.abs() >= slack * vn.abs();
    for (n, &vn) in v.iter().enumerate() {
        if vn.abs() <= S::lit(V_ZERO) {
            continue;
        }
        out.checked_periods += 1;
        let base = n * spp;
        let mut found = (0..spp).any(|k| ok(vn, trace.sigma[base + k] - sigma0_grid[k]));
        if !found {
            let tau = trace.tau[n];
            let (lo, hi) = (tau.min(tau0), tau.max(tau0));
            found = (0..=SECTOR_REFINE).any(|i| {
                let s = lo + (hi - lo) * S::of_usize(i) / S::of_usize(SECTOR_REFINE);
                ok(vn, trace.sigma_at(n, s) - mode.sigma0(s))
            });
        }
        if !found {
            out.failures.push(n);
        }
    }
    out
}

/// `count` states drawn uniformly from `center * (1 +- spread)` per
/// component.
pub fn random_starts<S: Scalar>(center: &[S], count: usize, spread: f64, seed: u64) -> Vec<Vec<S>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            center
                .iter()
                .map(|&c| c * S::lit(1.0 + rng.gen_range(-spread..=spread)))
                .collect()
        })
        .collect()
}

/// Runs `cfg` from each start in parallel; results keep the order of
/// `starts`.
pub fn simulate_ensemble<S: Scalar>(
    sys: &LtiSystem<S>,
    ramp: &RampParams<S>,
    starts: &[Vec<S>],
    cfg: &SimConfig<S>,
) -> Result<Vec<SimTrace<S>>> {
    starts
        .par_iter()
        .map(|x0| {
            let cfg = SimConfig {
                x0: x0.clone(),
                ..cfg.clone()
            };
            simulate(sys, ramp, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, ControlConfig, PowerStageParams};
    use crate::periodic::{find_modes, ModeSearch};

    fn setup(sigma_star: f64) -> (LtiSystem<f64>, RampParams<f64>, PeriodicMode<f64>) {
        let p = PowerStageParams::new(22.0, 47e-6, 20e-3, 20.0).unwrap();
        let sys = assemble(&p, &ControlConfig::Proportional { a: 1.0, vref: 13.5 }).unwrap();
        let ramp = RampParams::new(4.0, sigma_star, 400e-6).unwrap();
        let mode = find_modes(&sys, &ramp, &ModeSearch::default()).unwrap().modes.remove(0);
        (sys, ramp, mode)
    }

    #[test]
    fn u_vanishes_at_period_ends() {
        for (tau, tau0) in [(1.0, 2.0), (3.0, 2.0), (0.0, 4.0), (4.0, 0.5)] {
            let v = (tau - tau0) / 4.0;
            assert!(u_at::<f64>(0.0, tau, tau0, v).abs() < 1e-15);
            assert!(u_at::<f64>(4.0, tau, tau0, v).abs() < 1e-15);
        }
    }

    #[test]
    fn perturbed_start_converges_and_respects_bounds() {
        let (sys, ramp, mode) = setup(18.0);
        let center = mode.x0(0.0).into_vec();
        let x0: Vec<f64> = center.iter().map(|c| c * 1.3).collect();
        let trace = simulate(&sys, &ramp, &SimConfig::new(x0, 300)).unwrap();
        let d = diagnostics(&trace, &mode, 0.44).unwrap();
        assert!(d.final_deviation() < 1e-6, "{}", d.final_deviation());
        assert!(d.settled(1e-6).is_some());
        assert!(d.u_bound_holds && d.l2_bound_holds);
        assert!(d.max_u_ratio <= 1.0 + 1e-12);
        assert!(d.sector.applicable && d.sector.checked_periods > 0);
        assert!(d.sector.failures.is_empty(), "{:?}", d.sector.failures);
        let spp = trace.t.len() / trace.periods();
        for n in 0..trace.periods() {
            assert!(d.u[n * spp].abs() < 1e-15);
        }
    }

    #[test]
    fn sector_not_applicable_without_slack() {
        let (sys, ramp, mode) = setup(18.0);
        let trace = simulate(&sys, &ramp, &SimConfig::new(mode.x0(0.0).into_vec(), 3)).unwrap();
        let d = diagnostics(&trace, &mode, 18.0).unwrap();
        assert!(!d.sector.applicable);
        assert_eq!(d.sector.checked_periods, 0);
    }

    #[test]
    fn ensemble_matches_serial_runs() {
        let (sys, ramp, mode) = setup(18.0);
        let starts = random_starts(&mode.x0(0.0).into_vec(), 3, 0.5, 9);
        assert_eq!(starts, random_starts(&mode.x0(0.0).into_vec(), 3, 0.5, 9));
        let cfg = SimConfig::new(vec![0.0, 0.0], 20);
        let runs = simulate_ensemble(&sys, &ramp, &starts, &cfg).unwrap();
        for (x0, run) in starts.iter().zip(&runs) {
            let serial = simulate(&sys, &ramp, &SimConfig::new(x0.clone(), 20)).unwrap();
            assert_eq!(serial.x_period_start, run.x_period_start);
        }
    }

    #[test]
    fn settled_index() {
        let d = Diagnostics {
            v: vec![],
            deviation: vec![1.0, 1e-3, 1e-7, 1e-5, 1e-8, 1e-9],
            u: vec![],
            max_u_ratio: 0.0,
            max_l2_ratio: 0.0,
            u_bound_holds: true,
            l2_bound_holds: true,
            sector: SectorCheck {
                slack_v: 1.0,
                applicable: true,
                checked_periods: 0,
                failures: vec![],
            },
            tangential_touches: 0,
        };
        assert_eq!(d.settled(1e-6), Some(4));
        assert_eq!(d.settled(1e-10), None);
        assert_eq!(d.settled(10.0), Some(0));
    }
}

//! Smallest ramp amplitude at which a certificate exists.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::theorem1::theorem1_sweep;
use crate::lmi::theorem2::theorem2;
use crate::lmi::LmiOptions;
use crate::model::{LtiSystem, RampParams};
use crate::periodic::{find_modes, l1_sweep_for_system, select_l1, L1Policy, L1Table, ModeSearch};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Window inequality on `psi` plus the fixed-`eps` LMI sweep.
    Existence,
    /// A periodic mode plus the stability LMI.
    Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdOptions {
    /// Bisection stops once the bracket is this narrow, volts.
    pub resolution: f64,
    /// Uniform points evaluated before bisection to locate the bracket.
    pub scan_points: usize,
    pub l1: L1Policy,
    pub modes: ModeSearch,
    pub lmi: LmiOptions,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            scan_points: 5,
            l1: L1Policy::default(),
            modes: ModeSearch::default(),
            lmi: LmiOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult<S> {
    pub target: Target,
    /// Smallest certified `sigma_star` found, volts.
    pub threshold: S,
    /// Largest `sigma_star` found not certified, volts.
    pub last_failure: Option<S>,
    /// Every evaluated `(sigma_star, certified)`, ascending.
    pub table: Vec<(S, bool)>,
    /// No certified point lies below an uncertified one in the table.
    pub monotone: bool,
}

struct Trial<'a, S: Scalar> {
    sys: &'a LtiSystem<S>,
    ramp: &'a RampParams<S>,
    target: Target,
    opts: &'a ThresholdOptions,
    table: Option<L1Table<S>>,
}

impl<S: Scalar> Trial<'_, S> {
    fn certified(&self, sigma_star: S) -> Result<bool> {
        let ramp = self.ramp.with_sigma_star(sigma_star);
        match self.target {
            Target::Existence => Ok(theorem1_sweep(self.sys, &ramp, &self.opts.lmi)?.existence_certified()),
            Target::Stability => {
                let report = find_modes(self.sys, &ramp, &self.opts.modes)?;
                let Some(mode) = report.modes.first() else {
                    return Ok(false);
                };
                let choice = match select_l1(mode, &self.opts.l1, self.table.as_ref(), &self.opts.modes) {
                    Ok(c) => c,
                    Err(Error::InvalidParameter { .. }) => return Ok(false),
                    Err(e) => return Err(e),
                };
                if ramp.period * choice.l1 >= sigma_star {
                    return Ok(false);
                }
                Ok(theorem2(self.sys, &ramp, choice.l1, &self.opts.lmi)?.certificate.feasible)
            }
        }
    }
}

/// Bisection on `sigma_star` over `[lo, hi]` to `opts.resolution`.
pub fn min_sigma_star<S: Scalar>(
    sys: &LtiSystem<S>,
    ramp: &RampParams<S>,
    target: Target,
    lo: S,
    hi: S,
    opts: &ThresholdOptions,
) -> Result<ThresholdResult<S>> {
    if !(lo.is_finite() && hi.is_finite() && lo > S::zero() && lo <= hi) {
        return Err(Error::invalid("range", format!("need 0 < min <= max, got [{lo}, {hi}]")));
    }
    let table = match (&opts.l1, target) {
        (L1Policy::OpenLoopSweep { duties }, Target::Stability) => {
            let d: Vec<S> = duties.iter().map(|&x| S::lit(x)).collect();
            Some(l1_sweep_for_system(sys, ramp.period, &d, opts.modes.l1_grid)?)
        }
        _ => None,
    };
    let trial = Trial {
        sys,
        ramp,
        target,
        opts,
        table,
    };
    let no_bracket = |detail: &str| Error::NoBracket {
        lo: lo.as_f64(),
        hi: hi.as_f64(),
        detail: detail.to_string(),
    };
    if lo == hi {
        return if trial.certified(lo)? {
            Ok(ThresholdResult {
                target,
                threshold: lo,
                last_failure: None,
                table: vec![(lo, true)],
                monotone: true,
            })
        } else {
            Err(no_bracket("not certified at the single point"))
        };
    }

    let n = opts.scan_points.max(2);
    let points: Vec<S> = (0..n).map(|k| lo + (hi - lo) * S::of_usize(k) / S::of_usize(n - 1)).collect();
    let flags: Vec<bool> = points.par_iter().map(|&s| trial.certified(s)).collect::<Result<_>>()?;
    let mut table: Vec<(S, bool)> = points.iter().copied().zip(flags.iter().copied()).collect();
    let monotone = flags.windows(2).all(|w| !(w[0] && !w[1]));
    if flags[0] {
        return Err(no_bracket("already certified at the lower end"));
    }
    let Some(first_ok) = flags.iter().position(|&f| f) else {
        return Err(no_bracket("not certified at any scanned point"));
    };
    let (mut a, mut b) = (points[first_ok - 1], points[first_ok]);
    let res = S::lit(opts.resolution);
    while b - a > res {
        let mid = (a + b) * S::lit(0.5);
        let ok = trial.certified(mid)?;
        table.push((mid, ok));
        if ok {
            b = mid;
        } else {
            a = mid;
        }
    }
    table.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite"));
    let monotone = monotone && table.windows(2).all(|w| !(w[0].1 && !w[1].1));
    Ok(ThresholdResult {
        target,
        threshold: b,
        last_failure: Some(a),
        table,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble, ControlConfig, PowerStageParams};

    fn setup() -> (LtiSystem<f64>, RampParams<f64>) {
        let p = PowerStageParams::new(22.0, 47e-6, 20e-3, 20.0).unwrap();
        let sys = assemble(&p, &ControlConfig::Proportional { a: 1.0, vref: 13.5 }).unwrap();
        (sys, RampParams::new(4.0, 18.0, 400e-6).unwrap())
    }

    fn fixed() -> ThresholdOptions {
        ThresholdOptions {
            l1: L1Policy::Fixed { t_l1: 0.44 },
            ..ThresholdOptions::default()
        }
    }

    #[test]
    fn existence_threshold() {
        let (sys, ramp) = setup();
        let r = min_sigma_star(&sys, &ramp, Target::Existence, 10.0, 20.0, &ThresholdOptions::default()).unwrap();
        assert!((r.threshold - 12.83).abs() <= 0.1, "{r:?}");
        assert!(r.monotone);
        assert!(r.threshold - r.last_failure.unwrap() <= 0.05 + 1e-12);
    }

    #[test]
    fn stability_threshold_fixed_slope() {
        let (sys, ramp) = setup();
        let r = min_sigma_star(&sys, &ramp, Target::Stability, 10.0, 30.0, &fixed()).unwrap();
        assert!((r.threshold - 17.78).abs() <= 0.5, "{r:?}");
    }

    #[test]
    fn degenerate_interval() {
        let (sys, ramp) = setup();
        let r = min_sigma_star(&sys, &ramp, Target::Stability, 18.0, 18.0, &fixed()).unwrap();
        assert_eq!(r.threshold, 18.0);
        assert!(matches!(
            min_sigma_star(&sys, &ramp, Target::Stability, 15.0, 15.0, &fixed()),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn bad_ranges() {
        let (sys, ramp) = setup();
        let o = ThresholdOptions::default();
        assert!(matches!(
            min_sigma_star(&sys, &ramp, Target::Existence, 20.0, 10.0, &o),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            min_sigma_star(&sys, &ramp, Target::Existence, 20.0, 30.0, &o),
            Err(Error::NoBracket { .. })
        ));
    }
}

//! Closed-loop state-space model of the converter.
//!
//! The power stage has state `(i_L, U)`. Under proportional control the loop
//! is `sigma = a (V_ref - U)`; the full loop adds a sensor and a compensator
//! realisation, and the assembled state is ordered
//! `(power stage, sensor, compensator)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{is_hurwitz, solve, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerStageParams<S> {
    /// Load resistance, ohms.
    #[serde(rename = "R")]
    pub r: S,
    /// Output capacitance, farads.
    #[serde(rename = "C0")]
    pub c0: S,
    /// Inductance, henries.
    #[serde(rename = "L")]
    pub l: S,
    /// Input voltage, volts.
    #[serde(rename = "Vs")]
    pub vs: S,
}

impl<S: Scalar> PowerStageParams<S> {
    pub fn new(r: S, c0: S, l: S, vs: S) -> Result<Self> {
        let p = Self { r, c0, l, vs };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("R", self.r)?;
        positive("C0", self.c0)?;
        positive("L", self.l)?;
        positive("Vs", self.vs)
    }
}

/// Sawtooth `sigma_r(t) = sigma1 + sigma_star (t - nT) / T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampParams<S> {
    /// Ramp offset, volts.
    pub sigma1: S,
    /// Ramp amplitude, volts.
    pub sigma_star: S,
    /// Switching period, seconds.
    #[serde(rename = "T")]
    pub period: S,
}

impl<S: Scalar> RampParams<S> {
    pub fn new(sigma1: S, sigma_star: S, period: S) -> Result<Self> {
        let r = Self {
            sigma1,
            sigma_star,
            period,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        positive("sigma1", self.sigma1)?;
        positive("sigma_star", self.sigma_star)?;
        positive("T", self.period)
    }

    pub fn with_sigma_star(&self, sigma_star: S) -> Self {
        Self { sigma_star, ..*self }
    }

    /// Ramp value at time `t` measured from the start of a period.
    #[inline]
    pub fn phi(&self, t: S) -> S {
        self.sigma1 + self.sigma_star * t / self.period
    }

    /// Ramp slope, volts per second.
    #[inline]
    pub fn slope(&self) -> S {
        self.sigma_star / self.period
    }
}

/// `dx/dt = A x + B w`, `y = C x + D w` with scalar input and output.
///
/// A zero-dimensional block is a pure feedthrough `y = D w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceBlock<S> {
    pub a: Matrix<S>,
    pub b: Matrix<S>,
    pub c: Matrix<S>,
    pub d: S,
}

impl<S: Scalar> StateSpaceBlock<S> {
    pub fn new(a: Matrix<S>, b: Matrix<S>, c: Matrix<S>, d: S) -> Result<Self> {
        let blk = Self { a, b, c, d };
        blk.validate()?;
        Ok(blk)
    }

    /// Static gain `y = d w`.
    pub fn feedthrough(d: S) -> Self {
        Self {
            a: Matrix::zeros(0, 0),
            b: Matrix::zeros(0, 1),
            c: Matrix::zeros(1, 0),
            d,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.require_square()?;
        if self.b.rows() != n || self.b.cols() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "block B must be {n}x1, got {}x{}",
                self.b.rows(),
                self.b.cols()
            )));
        }
        if self.c.rows() != 1 || self.c.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "block C must be 1x{n}, got {}x{}",
                self.c.rows(),
                self.c.cols()
            )));
        }
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()) {
            return Err(Error::NonFinite("state-space block"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum ControlConfig<S> {
    /// `sigma = a (V_ref - U)`.
    Proportional {
        a: S,
        #[serde(rename = "Vref")]
        vref: S,
    },
    /// Sensor and compensator in the loop, `xi = V_ref - eta`.
    FullLoop {
        #[serde(rename = "Vref")]
        vref: S,
        compensator: StateSpaceBlock<S>,
        sensor: StateSpaceBlock<S>,
    },
}

impl<S: Scalar> ControlConfig<S> {
    pub fn validate(&self) -> Result<()> {
        match self {
            ControlConfig::Proportional { a, vref } => {
                positive("a", *a)?;
                finite("Vref", *vref)
            }
            ControlConfig::FullLoop {
                vref,
                compensator,
                sensor,
            } => {
                finite("Vref", *vref)?;
                compensator.validate()?;
                sensor.validate()
            }
        }
    }

    pub fn vref(&self) -> S {
        match self {
            ControlConfig::Proportional { vref, .. } | ControlConfig::FullLoop { vref, .. } => *vref,
        }
    }
}

/// `dx/dt = A x + B f + q`, `sigma = C x + psi` with Hurwitz `A`.
///
/// `offset` accumulates `A^{-1} q` across [`LtiSystem::shift`] so that states
/// of a shifted system map back with `x = x_shifted - offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem<S> {
    a: Matrix<S>,
    b: Matrix<S>,
    c: Matrix<S>,
    psi: S,
    q: Matrix<S>,
    offset: Matrix<S>,
    output: Option<Matrix<S>>,
}

impl<S: Scalar> LtiSystem<S> {
    /// Validates dimensions and rejects a non-Hurwitz `A`.
    pub fn new(a: Matrix<S>, b: Matrix<S>, c: Matrix<S>, psi: S, q: Matrix<S>) -> Result<Self> {
        let m = a.require_square()?;
        let col = |name: &str, x: &Matrix<S>| -> Result<()> {
            if x.rows() == m && x.cols() == 1 {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{name} must be {m}x1, got {}x{}",
                    x.rows(),
                    x.cols()
                )))
            }
        };
        col("B", &b)?;
        col("q", &q)?;
        if c.rows() != 1 || c.cols() != m {
            return Err(Error::DimensionMismatch(format!(
                "C must be 1x{m}, got {}x{}",
                c.rows(),
                c.cols()
            )));
        }
        finite("psi", psi)?;
        if !(a.is_finite() && b.is_finite() && c.is_finite() && q.is_finite()) {
            return Err(Error::NonFinite("closed-loop system"));
        }
        if m == 0 || !is_hurwitz(&a)? {
            return Err(Error::NotHurwitz);
        }
        Ok(Self {
            a,
            b,
            c,
            psi,
            q,
            offset: Matrix::zeros(m, 1),
            output: None,
        })
    }

    /// Attaches the row that reads the physical output voltage `U` from the
    /// state.
    pub fn with_output(mut self, row: Matrix<S>) -> Result<Self> {
        if row.rows() != 1 || row.cols() != self.dim() {
            return Err(Error::DimensionMismatch("output row".into()));
        }
        self.output = Some(row);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }
    pub fn a(&self) -> &Matrix<S> {
        &self.a
    }
    pub fn b(&self) -> &Matrix<S> {
        &self.b
    }
    pub fn c(&self) -> &Matrix<S> {
        &self.c
    }
    pub fn psi(&self) -> S {
        self.psi
    }
    pub fn q(&self) -> &Matrix<S> {
        &self.q
    }
    pub fn offset(&self) -> &Matrix<S> {
        &self.offset
    }
    pub fn output_row(&self) -> Option<&Matrix<S>> {
        self.output.as_ref()
    }

    pub fn is_shifted(&self) -> bool {
        self.q.max_abs() == S::zero()
    }

    /// `C B`.
    pub fn cb(&self) -> S {
        (&self.c * &self.b).as_scalar()
    }

    /// `C A^{-1} B`.
    pub fn c_ainv_b(&self) -> Result<S> {
        Ok((&self.c * &solve(&self.a, &self.b)?).as_scalar())
    }

    /// Change of variables `x~ = x + A^{-1} q`: returns the system with
    /// `q = 0` and `psi - C A^{-1} q`. Shifting a shifted system is a no-op.
    pub fn shift(&self) -> Result<Self> {
        if self.is_shifted() {
            return Ok(self.clone());
        }
        let ainv_q = solve(&self.a, &self.q)?;
        let psi = self.psi - (&self.c * &ainv_q).as_scalar();
        Ok(Self {
            psi,
            q: Matrix::zeros(self.dim(), 1),
            offset: &self.offset + &ainv_q,
            ..self.clone()
        })
    }

    /// Maps a state of this system's coordinates to the original
    /// (unshifted) coordinates.
    pub fn to_original(&self, x: &Matrix<S>) -> Matrix<S> {
        x - &self.offset
    }

    pub fn from_original(&self, x: &Matrix<S>) -> Matrix<S> {
        x + &self.offset
    }

    pub fn sigma(&self, x: &Matrix<S>) -> S {
        (&self.c * x).as_scalar() + self.psi
    }

    /// `A x + B f + q`.
    pub fn derivative(&self, x: &Matrix<S>, f: S) -> Matrix<S> {
        let mut dx = &self.a * x;
        dx += &self.b.scale(f);
        dx += &self.q;
        dx
    }
}

/// Power-stage matrices `(A_p, B_p, C_p)` for state `(i_L, U)`.
pub fn build_power_stage<S: Scalar>(p: &PowerStageParams<S>) -> Result<(Matrix<S>, Matrix<S>, Matrix<S>)> {
    p.validate()?;
    let one = S::one();
    let a = Matrix::from_rows(&[
        vec![S::zero(), -one / p.l],
        vec![one / p.c0, -one / (p.r * p.c0)],
    ])?;
    let b = Matrix::column(&[p.vs / p.l, S::zero()]);
    let c = Matrix::row(&[S::zero(), one]);
    if !is_hurwitz(&a)? {
        return Err(Error::NotHurwitz);
    }
    Ok((a, b, c))
}

/// Closes the loop around the power stage.
pub fn assemble<S: Scalar>(p: &PowerStageParams<S>, control: &ControlConfig<S>) -> Result<LtiSystem<S>> {
    control.validate()?;
    let (ap, bp, cp) = build_power_stage(p)?;
    match control {
        ControlConfig::Proportional { a, vref } => {
            LtiSystem::new(ap, bp, cp.scale(-*a), *a * *vref, Matrix::zeros(2, 1))?.with_output(cp)
        }
        ControlConfig::FullLoop {
            vref,
            compensator: comp,
            sensor: sens,
        } => {
            let (np, ns, nc) = (ap.rows(), sens.dim(), comp.dim());
            let z = Matrix::zeros;
            let bs_cp = &sens.b * &cp;
            let bc_ds_cp = (&comp.b * &cp).scale(-sens.d);
            let bc_cs = -&(&comp.b * &sens.c);
            let a = Matrix::from_blocks(&[
                vec![&ap, &z(np, ns), &z(np, nc)],
                vec![&bs_cp, &sens.a, &z(ns, nc)],
                vec![&bc_ds_cp, &bc_cs, &comp.a],
            ])?;
            let b = Matrix::from_blocks(&[vec![&bp], vec![&z(ns, 1)], vec![&z(nc, 1)]])?;
            let q = Matrix::from_blocks(&[vec![&z(np, 1)], vec![&z(ns, 1)], vec![&comp.b.scale(*vref)]])?;
            let c = Matrix::from_blocks(&[vec![
                &cp.scale(-comp.d * sens.d),
                &sens.c.scale(-comp.d),
                &comp.c,
            ]])?;
            let output = Matrix::from_blocks(&[vec![&cp, &z(1, ns), &z(1, nc)]])?;
            LtiSystem::new(a, b, c, comp.d * *vref, q)?.with_output(output)
        }
    }
}

fn positive<S: Scalar>(name: &'static str, x: S) -> Result<()> {
    if x.is_finite() && x > S::zero() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {x}")))
    }
}

fn finite<S: Scalar>(name: &'static str, x: S) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}

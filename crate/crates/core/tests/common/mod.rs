//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use pwmcert::model::{assemble, ControlConfig, LtiSystem, PowerStageParams, RampParams};
use pwmcert::numerics::Matrix;
use rand::Rng;

pub const PERIOD: f64 = 400e-6;
pub const SIGMA1: f64 = 4.0;

pub fn buck() -> (PowerStageParams<f64>, ControlConfig<f64>) {
    (
        PowerStageParams::new(22.0, 47e-6, 20e-3, 20.0).unwrap(),
        ControlConfig::Proportional { a: 1.0, vref: 13.5 },
    )
}

pub fn buck_system() -> LtiSystem<f64> {
    let (p, c) = buck();
    assemble(&p, &c).unwrap()
}

pub fn ramp(sigma_star: f64) -> RampParams<f64> {
    RampParams::new(SIGMA1, sigma_star, PERIOD).unwrap()
}

/// `e^M` as `(e^{M / 2^k})^{2^k}` with a 40-term Taylor series once
/// `||M / 2^k||_1 <= 1/64`.
pub fn expm_series(m: &Matrix<f64>) -> Matrix<f64> {
    let n = m.rows();
    let mut k = 0;
    while m.norm_one() / 2f64.powi(k) > 1.0 / 64.0 {
        k += 1;
    }
    let a = m.scale(0.5f64.powi(k));
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for j in 1..=40 {
        term = (&term * &a).scale(1.0 / j as f64);
        sum = &sum + &term;
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    sum
}

/// Random matrix with eigenvalues strictly in the left half plane: a random
/// block shifted left past its Gershgorin discs.
pub fn random_stable(rng: &mut impl Rng, n: usize, scale: f64) -> Matrix<f64> {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = rng.gen_range(-1.0..1.0) * scale;
        }
    }
    let radius = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    for i in 0..n {
        m[(i, i)] -= radius * rng.gen_range(1.0..1.5) + 0.05 * scale;
    }
    m
}

pub fn random_symmetric(rng: &mut impl Rng, n: usize) -> Matrix<f64> {
    let mag = 10f64.powf(rng.gen_range(-3.0..3.0));
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0) * mag;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn rel_err(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    (a - b).norm_fro() / b.norm_fro().max(f64::MIN_POSITIVE)
}

//! Discrete-time Ornstein-Uhlenbeck movement model.
//!
//! Horizontal axes integrate an OU velocity (`ṗ = v`, `v̇ = -β v + σ N(t)`),
//! the vertical axis is an OU process on the altitude itself. Over a step of
//! `dt` seconds the state evolves as `x(t+dt) = H x(t) + ν` with
//! `ν ~ N(0, Q)`, both block-diagonal over the (x, y, z) axes.

use nalgebra::{Matrix2, Matrix5, Vector3, Vector5};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Target state `[px, vx, py, vy, pz]` in meters and m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(pub Vector5<f64>);

impl StateVector {
    pub const PX: usize = 0;
    pub const VX: usize = 1;
    pub const PY: usize = 2;
    pub const VY: usize = 3;
    pub const PZ: usize = 4;

    pub fn new(px: f64, vx: f64, py: f64, vy: f64, pz: f64) -> Self {
        StateVector(Vector5::new(px, vx, py, vy, pz))
    }

    pub fn zeros() -> Self {
        StateVector(Vector5::zeros())
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        StateVector(Vector5::from(a))
    }

    pub fn to_array(&self) -> [f64; 5] {
        self.0.into()
    }

    pub fn px(&self) -> f64 {
        self.0[Self::PX]
    }
    pub fn vx(&self) -> f64 {
        self.0[Self::VX]
    }
    pub fn py(&self) -> f64 {
        self.0[Self::PY]
    }
    pub fn vy(&self) -> f64 {
        self.0[Self::VY]
    }
    pub fn pz(&self) -> f64 {
        self.0[Self::PZ]
    }

    /// Cartesian position `(px, py, pz)`.
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.px(), self.py(), self.pz())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Mean-reversion rates (1/s) and diffusion strengths of the three axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementParams {
    pub beta_x: f64,
    pub beta_y: f64,
    pub beta_z: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
}

impl MovementParams {
    pub const DEFAULT_SIGMA: [f64; 3] = [1.0, 1.0, 0.1];

    pub fn new(beta: [f64; 3], sigma: [f64; 3]) -> Result<Self> {
        let p = MovementParams {
            beta_x: beta[0],
            beta_y: beta[1],
            beta_z: beta[2],
            sigma_x: sigma[0],
            sigma_y: sigma[1],
            sigma_z: sigma[2],
        };
        p.validate()?;
        Ok(p)
    }

    /// Rates `beta` with the default diffusion strengths.
    pub fn with_betas(beta: [f64; 3]) -> Result<Self> {
        Self::new(beta, Self::DEFAULT_SIGMA)
    }

    pub fn betas(&self) -> [f64; 3] {
        [self.beta_x, self.beta_y, self.beta_z]
    }

    pub fn sigmas(&self) -> [f64; 3] {
        [self.sigma_x, self.sigma_y, self.sigma_z]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_x", self.beta_x),
            ("beta_y", self.beta_y),
            ("beta_z", self.beta_z),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_z", self.sigma_z),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Transition matrix and process-noise covariance for one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionModel {
    pub h: Matrix5<f64>,
    pub q: Matrix5<f64>,
    pub dt: f64,
}

impl TransitionModel {
    pub fn new(params: &MovementParams, dt: f64) -> Result<Self> {
        Ok(TransitionModel {
            h: transition_matrix(params, dt)?,
            q: process_noise_cov(params, dt)?,
            dt,
        })
    }

    /// Zero-length step: `H = I`, `Q = 0`.
    pub fn identity() -> Self {
        TransitionModel {
            h: Matrix5::identity(),
            q: Matrix5::zeros(),
            dt: 0.0,
        }
    }

    pub fn propagate(&self, state: &StateVector) -> StateVector {
        StateVector(self.h * state.0)
    }

    /// `H·state + w` with `w ~ N(0, Q)`.
    pub fn sample<R: Rng + ?Sized>(&self, state: &StateVector, rng: &mut R) -> Result<StateVector> {
        let l = linalg::psd_sqrt(&self.q)?;
        let w = Vector5::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        Ok(StateVector(self.h * state.0 + l * w))
    }
}

fn check_step(params: &MovementParams, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("time step must be finite and > 0, got {dt}")));
    }
    params.validate()
}

/// `(1 - e^{-x}) / x`, accurate down to `x = 0`.
fn relaxation_ratio(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(x - 2(1 - e^{-x}) + (1 - e^{-2x})/2) / x³`.
///
/// The direct form cancels catastrophically for small `x` (the numerator
/// is `≈ x³/3` built from O(x) terms), so below `x = 1` the power series is
/// summed instead: coefficient of `x^k` is `(-1)^{k+1} (2^{k-1} - 2) / k!`.
fn position_variance_factor(x: f64) -> f64 {
    if x < 1.0 {
        let mut sum = 0.0;
        // x^{k-3} / k!, starting at k = 3
        let mut scaled = 1.0 / 6.0;
        let mut pow2 = 4.0; // 2^{k-1}
        let mut sign = 1.0;
        for k in 3..=30u32 {
            sum += sign * (pow2 - 2.0) * scaled;
            scaled *= x / f64::from(k + 1);
            pow2 *= 2.0;
            sign = -sign;
        }
        sum
    } else {
        (x + 2.0 * (-x).exp_m1() - 0.5 * (-2.0 * x).exp_m1()) / (x * x * x)
    }
}

fn horizontal_blocks(beta: f64, sigma: f64, dt: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let x = beta * dt;
    let g = relaxation_ratio(x);
    let h = Matrix2::new(1.0, dt * g, 0.0, (-x).exp());
    let s2 = sigma * sigma;
    let q11 = s2 * dt.powi(3) * position_variance_factor(x);
    let q12 = 0.5 * s2 * dt * dt * g * g;
    let q22 = s2 * dt * relaxation_ratio(2.0 * x);
    (h, Matrix2::new(q11, q12, q12, q22))
}

fn vertical_noise(beta: f64, sigma: f64, dt: f64) -> f64 {
    sigma * sigma * dt * relaxation_ratio(2.0 * beta * dt)
}

/// Block-diagonal transition matrix `diag(H_x, H_y, H_z)`.
pub fn transition_matrix(params: &MovementParams, dt: f64) -> Result<Matrix5<f64>> {
    check_step(params, dt)?;
    let (hx, _) = horizontal_blocks(params.beta_x, params.sigma_x, dt);
    let (hy, _) = horizontal_blocks(params.beta_y, params.sigma_y, dt);
    let mut h = Matrix5::zeros();
    h.fixed_view_mut::<2, 2>(0, 0).copy_from(&hx);
    h.fixed_view_mut::<2, 2>(2, 2).copy_from(&hy);
    h[(4, 4)] = (-params.beta_z * dt).exp();
    Ok(h)
}

/// Block-diagonal process-noise covariance `diag(Q_x, Q_y, Q_z)`.
pub fn process_noise_cov(params: &MovementParams, dt: f64) -> Result<Matrix5<f64>> {
    check_step(params, dt)?;
    let (_, qx) = horizontal_blocks(params.beta_x, params.sigma_x, dt);
    let (_, qy) = horizontal_blocks(params.beta_y, params.sigma_y, dt);
    let mut q = Matrix5::zeros();
    q.fixed_view_mut::<2, 2>(0, 0).copy_from(&qx);
    q.fixed_view_mut::<2, 2>(2, 2).copy_from(&qy);
    q[(4, 4)] = vertical_noise(params.beta_z, params.sigma_z, dt);
    Ok(q)
}

pub fn propagate(state: &StateVector, model: &TransitionModel) -> StateVector {
    model.propagate(state)
}

pub fn sample_transition<R: Rng + ?Sized>(
    state: &StateVector,
    params: &MovementParams,
    dt: f64,
    rng: &mut R,
) -> Result<StateVector> {
    TransitionModel::new(params, dt)?.sample(state, rng)
}

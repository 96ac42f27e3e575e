//! One predict/update cycle of the power-domain Kalman filters.

use nalgebra::{Vector5, Vector6};

use super::unscented::{symmetric_sigma_points, ut_moments, UtMoments};
use super::{AugmentedBelief, FilterBelief, FilterKind, StepDiagnostics};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measurement::{AntennaConfig, MeasurementModel, PowerObservation};
use crate::movement::{StateVector, TransitionModel};

/// Lower bound on the predicted power variance, as a multiple of `P0²`.
pub const VARIANCE_FLOOR_FACTOR: f64 = 1e-4;

/// Central-difference step for the EKF Jacobian, relative to the prior
/// standard deviation of each augmented component.
const JACOBIAN_STEP: f64 = 1e-3;

/// Predicted belief `(H m, H P Hᵀ + Q)` at time `t`.
pub fn predict(belief: &FilterBelief, tm: &TransitionModel, t: f64) -> FilterBelief {
    let mean = tm.propagate(&belief.mean);
    let cov = linalg::symmetrize(&(tm.h * belief.cov * tm.h.transpose() + tm.q));
    FilterBelief { mean, cov, t }
}

/// Mean, variance and cross-covariance of the measurement for a predicted
/// belief, by unscented transform or by first-order linearization.
pub fn measurement_moments<H>(kind: FilterKind, aug: &AugmentedBelief, h: &H) -> Result<UtMoments<6>>
where
    H: Fn(&Vector6<f64>) -> Result<f64>,
{
    match kind {
        FilterKind::Ukf => {
            let points = symmetric_sigma_points(&aug.mean, &aug.cov)?;
            ut_moments(&points, h)
        }
        FilterKind::Ekf => linearized_moments(aug, h),
    }
}

fn linearized_moments<H>(aug: &AugmentedBelief, h: &H) -> Result<UtMoments<6>>
where
    H: Fn(&Vector6<f64>) -> Result<f64>,
{
    let ybar = h(&aug.mean)?;
    if !ybar.is_finite() {
        return Err(Error::numerical(format!(
            "measurement function is {ybar} at the predicted mean"
        )));
    }
    let mut jac = Vector6::zeros();
    for i in 0..6 {
        let step = JACOBIAN_STEP * aug.cov[(i, i)].sqrt().max(1.0);
        let mut hi = aug.mean;
        let mut lo = aug.mean;
        hi[i] += step;
        lo[i] -= step;
        let d = (h(&hi)? - h(&lo)?) / (hi[i] - lo[i]);
        if !d.is_finite() {
            return Err(Error::numerical(format!("non-finite Jacobian entry {i}")));
        }
        jac[i] = d;
    }
    let pxy = aug.cov * jac;
    Ok(UtMoments {
        ybar,
        f: jac.dot(&pxy),
        pxy,
    })
}

/// Generic filter step against an arbitrary augmented measurement function
/// `h([x; γ])`. `y` is the observed power at time `t`.
pub fn step_with<H>(
    kind: FilterKind,
    belief: &FilterBelief,
    y: f64,
    t: f64,
    tm: &TransitionModel,
    h: &H,
    variance_floor: f64,
) -> Result<(FilterBelief, StepDiagnostics)>
where
    H: Fn(&Vector6<f64>) -> Result<f64>,
{
    let prior = predict(belief, tm, t);
    let aug = AugmentedBelief::from_belief(&prior);
    let m = measurement_moments(kind, &aug, h)?;
    Ok(update(&prior, y, &m, variance_floor))
}

/// Applies the gain `M = Pxy / F` to the state part of the augmented
/// vector; the noise component is never updated.
pub fn update(prior: &FilterBelief, y: f64, m: &UtMoments<6>, variance_floor: f64) -> (FilterBelief, StepDiagnostics) {
    let f_used = m.f.max(variance_floor);
    let gain: Vector5<f64> = m.pxy.fixed_rows::<5>(0).into_owned() / f_used;
    let v = y - m.ybar;
    let correction = gain * v;
    let mean = StateVector(prior.mean.0 + correction);
    let raw = prior.cov - gain * gain.transpose() * f_used;
    let floor = 1e-12 * prior.cov.trace().abs().max(1.0);
    let (cov, repaired) = linalg::repair_psd(&raw, floor);
    let diag = StepDiagnostics {
        t: prior.t,
        ybar: m.ybar,
        f: m.f,
        f_used,
        v,
        y,
        gain_norm: correction.norm(),
        saturated: false,
        skipped: false,
        repaired,
    };
    (FilterBelief { mean, cov, t: prior.t }, diag)
}

fn check_time(belief: &FilterBelief, obs: &PowerObservation, tm: &TransitionModel) -> Result<()> {
    let dt = obs.t - belief.t;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!(
            "observation time {} is not after belief time {}",
            obs.t, belief.t
        )));
    }
    if (tm.dt - dt).abs() > 1e-9 * dt.max(1.0) {
        return Err(Error::invalid(format!(
            "transition model built for dt = {} but observation is {dt} s ahead",
            tm.dt
        )));
    }
    Ok(())
}

pub(crate) fn power_function<'a>(
    model: &'a MeasurementModel,
    antenna: &'a AntennaConfig,
) -> impl Fn(&Vector6<f64>) -> Result<f64> + 'a {
    move |x: &Vector6<f64>| {
        let state = StateVector(x.fixed_rows::<5>(0).into_owned());
        model.received_power(&state, x[5], antenna)
    }
}

fn kind_step(
    kind: FilterKind,
    belief: &FilterBelief,
    obs: &PowerObservation,
    tm: &TransitionModel,
    antenna: &AntennaConfig,
    model: &MeasurementModel,
) -> Result<(FilterBelief, StepDiagnostics)> {
    check_time(belief, obs, tm)?;
    let h = power_function(model, antenna);
    let floor = VARIANCE_FLOOR_FACTOR * model.calibration.p0.powi(2);
    let (post, mut diag) = step_with(kind, belief, obs.y, obs.t, tm, &h, floor)?;
    diag.saturated = obs.saturated;
    Ok((post, diag))
}

/// Unscented Kalman filter step for one power observation.
pub fn ukf_step(
    belief: &FilterBelief,
    obs: &PowerObservation,
    tm: &TransitionModel,
    antenna: &AntennaConfig,
    model: &MeasurementModel,
) -> Result<(FilterBelief, StepDiagnostics)> {
    kind_step(FilterKind::Ukf, belief, obs, tm, antenna, model)
}

/// Extended Kalman filter step: measurement mean at the predicted state with
/// `γ = 0`, variance and cross-covariance from a central-difference Jacobian.
pub fn ekf_step(
    belief: &FilterBelief,
    obs: &PowerObservation,
    tm: &TransitionModel,
    antenna: &AntennaConfig,
    model: &MeasurementModel,
) -> Result<(FilterBelief, StepDiagnostics)> {
    kind_step(FilterKind::Ekf, belief, obs, tm, antenna, model)
}

/// Predicted power moments of `belief` (without a time update) as seen by
/// `antenna`.
pub fn predicted_power_moments(
    kind: FilterKind,
    belief: &FilterBelief,
    antenna: &AntennaConfig,
    model: &MeasurementModel,
) -> Result<UtMoments<6>> {
    let h = power_function(model, antenna);
    measurement_moments(kind, &AugmentedBelief::from_belief(belief), &h)
}

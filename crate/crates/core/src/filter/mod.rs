//! State estimation from power observations: the unscented Kalman filter and
//! a linearized (extended) variant sharing the same predict/update skeleton.
//!
//! The measurement is handled in the power domain. The state is augmented
//! with the unit-variance receiver noise `γ` so the sigma points also carry
//! the noise nonlinearity of `(ξ + √P0·γ)²`.

mod step;
mod unscented;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix5, Matrix6, Vector5, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{AntennaConfig, MeasurementModel, PowerObservation};
use crate::movement::{MovementParams, StateVector, TransitionModel};

pub use step::{
    ekf_step, measurement_moments, predict, predicted_power_moments, step_with, ukf_step, update, VARIANCE_FLOOR_FACTOR,
};
pub use unscented::{symmetric_sigma_points, ut_moments, UtMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ekf,
    #[default]
    Ukf,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
        })
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ekf" => Ok(FilterKind::Ekf),
            "ukf" => Ok(FilterKind::Ukf),
            other => Err(Error::invalid(format!(
                "unknown filter kind {other:?} (expected ekf|ukf)"
            ))),
        }
    }
}

/// Gaussian belief over the target state, valid at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterBelief {
    pub mean: StateVector,
    pub cov: Matrix5<f64>,
    pub t: f64,
}

impl FilterBelief {
    pub const DEFAULT_OFFSET: f64 = 100.0;
    pub const DEFAULT_ALTITUDE: f64 = 30.0;
    pub const DEFAULT_VARIANCES: [f64; 5] = [1e6, 25.0, 1e6, 25.0, 25.0];

    pub fn new(mean: StateVector, cov: Matrix5<f64>, t: f64) -> Self {
        FilterBelief { mean, cov, t }
    }

    /// Starting guess next to the antenna that made the first detection:
    /// `DEFAULT_OFFSET` m along its boresight at `DEFAULT_ALTITUDE` m, at
    /// rest, with a broad diagonal covariance.
    pub fn near_antenna(antenna: &AntennaConfig, t: f64) -> Self {
        let p = antenna.position + antenna.boresight() * Self::DEFAULT_OFFSET;
        FilterBelief {
            mean: StateVector::new(p.x, 0.0, p.y, 0.0, Self::DEFAULT_ALTITUDE),
            cov: Matrix5::from_diagonal(&Vector5::from(Self::DEFAULT_VARIANCES)),
            t,
        }
    }

    /// [`FilterBelief::near_antenna`] for the first record of `detections`.
    pub fn default_for(detections: &[Detection], towers: &[AntennaConfig]) -> Result<Self> {
        let first = detections
            .first()
            .ok_or_else(|| Error::data("cannot derive an initial belief from zero detections"))?;
        let antenna = towers
            .iter()
            .find(|a| a.id == first.antenna)
            .ok_or_else(|| Error::data(format!("record 0: unknown antenna id {:?}", first.antenna)))?;
        Ok(Self::near_antenna(antenna, first.t))
    }
}

/// Per-step innovation statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    /// Predicted power mean.
    pub ybar: f64,
    /// Predicted power variance as computed.
    pub f: f64,
    /// Variance actually used in the gain (after flooring).
    pub f_used: f64,
    /// Power-domain innovation `y - ybar`.
    pub v: f64,
    /// Observed power.
    pub y: f64,
    /// Norm of the applied mean correction.
    pub gain_norm: f64,
    pub saturated: bool,
    /// The observation was not applied (saturated and skipping enabled).
    pub skipped: bool,
    /// The posterior covariance needed eigenvalue repair.
    pub repaired: bool,
}

/// Belief augmented with the receiver noise: mean `[x; 0]`,
/// covariance `diag(P, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedBelief {
    pub mean: Vector6<f64>,
    pub cov: Matrix6<f64>,
}

impl AugmentedBelief {
    pub fn from_belief(belief: &FilterBelief) -> Self {
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<5>(0).copy_from(&belief.mean.0);
        let mut cov = Matrix6::zeros();
        cov.fixed_view_mut::<5, 5>(0, 0).copy_from(&belief.cov);
        cov[(5, 5)] = 1.0;
        AugmentedBelief { mean, cov }
    }
}

/// The 12 sigma points of an augmented belief.
pub fn sigma_points(belief: &AugmentedBelief) -> Result<Vec<Vector6<f64>>> {
    symmetric_sigma_points(&belief.mean, &belief.cov)
}

/// A raw detection: time, detecting antenna, display number.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub t: f64,
    pub antenna: String,
    pub z: u32,
}

impl Detection {
    pub fn new(t: f64, antenna: impl Into<String>, z: u32) -> Self {
        Detection {
            t,
            antenna: antenna.into(),
            z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Predict through saturated records instead of applying them.
    #[serde(default)]
    pub skip_saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterRun {
    pub track: Vec<FilterBelief>,
    pub diags: Vec<StepDiagnostics>,
}

impl FilterRun {
    pub fn repairs(&self) -> usize {
        self.diags.iter().filter(|d| d.repaired).count()
    }
}

/// Runs the filter over time-ordered detections, one posterior per record.
///
/// A first record at exactly `init.t` is applied without prediction.
pub fn run_filter(
    detections: &[Detection],
    init: &FilterBelief,
    params: &MovementParams,
    towers: &[AntennaConfig],
    model: &MeasurementModel,
    kind: FilterKind,
    options: &FilterOptions,
) -> Result<FilterRun> {
    params.validate()?;
    let lookup: HashMap<&str, &AntennaConfig> = towers.iter().map(|a| (a.id.as_str(), a)).collect();
    let cal = &model.calibration;
    let floor = VARIANCE_FLOOR_FACTOR * cal.p0 * cal.p0;
    let mut run = FilterRun {
        track: Vec::with_capacity(detections.len()),
        diags: Vec::with_capacity(detections.len()),
    };
    let mut belief = *init;
    for (k, det) in detections.iter().enumerate() {
        let antenna = lookup.get(det.antenna.as_str()).ok_or_else(|| {
            Error::data(format!(
                "record {k} (t = {}): unknown antenna id {:?}",
                det.t, det.antenna
            ))
        })?;
        let dt = det.t - belief.t;
        let tm = if dt > 0.0 {
            TransitionModel::new(params, dt)?
        } else if k == 0 && dt == 0.0 {
            TransitionModel::identity()
        } else {
            return Err(Error::data(format!(
                "record {k}: time {} does not increase past {}",
                det.t, belief.t
            )));
        };
        let obs = PowerObservation::from_display(det.t, det.antenna.clone(), f64::from(det.z), cal)
            .map_err(|e| Error::data(format!("record {k}: {e}")))?;
        let wrap = |e: Error| Error::FilterStep {
            step: k,
            source: Box::new(e),
        };
        let h = step::power_function(model, antenna);
        let prior = predict(&belief, &tm, det.t);
        let (post, mut diag) = if obs.saturated && options.skip_saturated {
            let diag = StepDiagnostics {
                t: det.t,
                ybar: f64::NAN,
                f: f64::NAN,
                f_used: f64::NAN,
                v: 0.0,
                y: obs.y,
                gain_norm: 0.0,
                saturated: true,
                skipped: true,
                repaired: false,
            };
            (prior, diag)
        } else {
            let aug = AugmentedBelief::from_belief(&prior);
            let m = measurement_moments(kind, &aug, &h).map_err(wrap)?;
            update(&prior, obs.y, &m, floor)
        };
        diag.saturated = obs.saturated;
        belief = post;
        run.track.push(post);
        run.diags.push(diag);
    }
    Ok(run)
}

//! Display-number / power link and the noisy received-power model.
//!
//! The receiver reports an integer `Z ∈ [Zm, ZM]` related to the noiseless
//! received power `ξ²` by `atanh((Z - Zm)/(ZM - Zm)) = b·ln(ξ²/P0 + 1)`.
//! The power at the antenna is `(ξ + √P0·γ)²` with `γ ~ N(0, 1)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::movement::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub b: f64,
    #[serde(rename = "P0")]
    pub p0: f64,
    #[serde(rename = "Zm")]
    pub z_min: f64,
    #[serde(rename = "ZM")]
    pub z_max: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            b: 0.3012,
            p0: 4.3458e-11,
            z_min: 0.0,
            z_max: 255.0,
        }
    }
}

impl Calibration {
    /// Display values above `z_max - SATURATION_MARGIN` are clamped to it.
    pub const SATURATION_MARGIN: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::invalid(format!("calibration b must be > 0, got {}", self.b)));
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::invalid(format!("calibration P0 must be > 0, got {}", self.p0)));
        }
        if !(self.z_min.is_finite() && self.z_max.is_finite() && self.z_min < self.z_max) {
            return Err(Error::invalid(format!(
                "display bounds must satisfy Zm < ZM, got [{}, {}]",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }

    pub fn saturation_level(&self) -> f64 {
        self.z_max - Self::SATURATION_MARGIN
    }

    pub fn is_saturated(&self, z: f64) -> bool {
        z > self.saturation_level()
    }
}

/// Power (watts) for display value `z`. Values in the saturated band are
/// clamped to `ZM - 0.5` first so the result stays finite.
pub fn display_to_power(z: f64, cal: &Calibration) -> Result<f64> {
    if !(z >= cal.z_min && z <= cal.z_max) {
        return Err(Error::invalid(format!(
            "display value {z} outside [{}, {}]",
            cal.z_min, cal.z_max
        )));
    }
    let z = z.min(cal.saturation_level());
    let u = (z - cal.z_min) / (cal.z_max - cal.z_min);
    Ok(cal.p0 * (u.atanh() / cal.b).exp_m1())
}

/// Real-valued display number for power `y`; lies in `[Zm, ZM)`.
pub fn power_to_display(y: f64, cal: &Calibration) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::invalid(format!("power must be >= 0, got {y}")));
    }
    let u = (cal.b * (y / cal.p0).ln_1p()).tanh();
    Ok(cal.z_min + (cal.z_max - cal.z_min) * u)
}

/// Default antenna pattern parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pattern {
    /// Power factor `A` (W·m²): on-boresight noiseless power at 1 m.
    #[serde(rename = "A")]
    pub power_factor: f64,
    /// Exponent of the cosine gain lobe.
    pub p: f64,
}

impl Default for Pattern {
    fn default() -> Self {
        Pattern {
            power_factor: 1e-4,
            p: 2.0,
        }
    }
}

/// A receiving antenna. Positions share the planar meter frame of
/// [`StateVector`]; azimuth is a compass bearing (clockwise from +y).
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaConfig {
    pub id: String,
    pub position: Vector3<f64>,
    pub boresight_azimuth: f64,
    pub pattern: Pattern,
}

impl AntennaConfig {
    pub fn new(id: impl Into<String>, position: Vector3<f64>, boresight_azimuth: f64) -> Self {
        AntennaConfig {
            id: id.into(),
            position,
            boresight_azimuth,
            pattern: Pattern::default(),
        }
    }

    pub fn with_pattern(mut self, pattern: Pattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|v| v.is_finite()) || !self.boresight_azimuth.is_finite() {
            return Err(Error::invalid(format!("antenna {}: non-finite geometry", self.id)));
        }
        if !(self.pattern.power_factor > 0.0 && self.pattern.p > 0.0)
            || !self.pattern.power_factor.is_finite()
            || !self.pattern.p.is_finite()
        {
            return Err(Error::invalid(format!(
                "antenna {}: pattern parameters must be positive",
                self.id
            )));
        }
        Ok(())
    }

    /// Horizontal unit vector along the boresight.
    pub fn boresight(&self) -> Vector3<f64> {
        Vector3::new(self.boresight_azimuth.sin(), self.boresight_azimuth.cos(), 0.0)
    }
}

/// Noiseless field amplitude `ξ` of a target at `position` seen by `antenna`.
pub trait FieldModel: Send + Sync {
    fn amplitude(&self, position: &Vector3<f64>, antenna: &AntennaConfig) -> Result<f64>;
}

/// Inverse-distance amplitude with a cosine-power azimuthal lobe:
/// `ξ = √(A·g(θ)) / r`, `g(θ) = max(cos θ, floor)^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineLobe {
    pub back_lobe_floor: f64,
}

impl Default for CosineLobe {
    fn default() -> Self {
        CosineLobe { back_lobe_floor: 0.05 }
    }
}

impl CosineLobe {
    /// Gain for an offset `d` (target minus antenna). Directly overhead the
    /// azimuth is undefined and the on-boresight gain is used.
    pub fn gain(&self, d: &Vector3<f64>, antenna: &AntennaConfig) -> f64 {
        let horiz = (d.x * d.x + d.y * d.y).sqrt();
        let cos = if horiz > 0.0 {
            (d.x * antenna.boresight_azimuth.sin() + d.y * antenna.boresight_azimuth.cos()) / horiz
        } else {
            1.0
        };
        cos.max(self.back_lobe_floor).powf(antenna.pattern.p)
    }
}

impl FieldModel for CosineLobe {
    fn amplitude(&self, position: &Vector3<f64>, antenna: &AntennaConfig) -> Result<f64> {
        let d = position - antenna.position;
        let r = d.norm();
        if !(r > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "target coincides with antenna {}",
                antenna.id
            )));
        }
        Ok((antenna.pattern.power_factor * self.gain(&d, antenna)).sqrt() / r)
    }
}

/// Calibration plus field model: everything needed to evaluate `h`.
#[derive(Clone)]
pub struct MeasurementModel {
    pub calibration: Calibration,
    field: Arc<dyn FieldModel>,
}

impl std::fmt::Debug for MeasurementModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementModel")
            .field("calibration", &self.calibration)
            .finish_non_exhaustive()
    }
}

impl Default for MeasurementModel {
    fn default() -> Self {
        Self::new(Calibration::default())
    }
}

impl MeasurementModel {
    pub fn new(calibration: Calibration) -> Self {
        MeasurementModel {
            calibration,
            field: Arc::new(CosineLobe::default()),
        }
    }

    pub fn with_field(calibration: Calibration, field: Arc<dyn FieldModel>) -> Self {
        MeasurementModel { calibration, field }
    }

    pub fn field_amplitude(&self, state: &StateVector, antenna: &AntennaConfig) -> Result<f64> {
        self.field.amplitude(&state.position(), antenna)
    }

    /// `h = (ξ + √P0·γ)²`.
    pub fn received_power(&self, state: &StateVector, gamma: f64, antenna: &AntennaConfig) -> Result<f64> {
        let xi = self.field_amplitude(state, antenna)?;
        Ok(noisy_power(xi, gamma, self.calibration.p0))
    }
}

#[inline]
pub(crate) fn noisy_power(xi: f64, gamma: f64, p0: f64) -> f64 {
    let a = xi + p0.sqrt() * gamma;
    a * a
}

/// `ξ` under the default [`CosineLobe`] pattern.
pub fn field_amplitude(state: &StateVector, antenna: &AntennaConfig) -> Result<f64> {
    CosineLobe::default().amplitude(&state.position(), antenna)
}

/// `(ξ + √P0·γ)²` under the default pattern.
pub fn received_power(state: &StateVector, gamma: f64, antenna: &AntennaConfig, cal: &Calibration) -> Result<f64> {
    let xi = field_amplitude(state, antenna)?;
    Ok(noisy_power(xi, gamma, cal.p0))
}

/// One converted observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerObservation {
    pub t: f64,
    pub antenna: String,
    pub z: f64,
    pub y: f64,
    pub saturated: bool,
}

impl PowerObservation {
    pub fn from_display(t: f64, antenna: impl Into<String>, z: f64, cal: &Calibration) -> Result<Self> {
        Ok(PowerObservation {
            t,
            antenna: antenna.into(),
            z,
            y: display_to_power(z, cal)?,
            saturated: cal.is_saturated(z),
        })
    }
}

/// Converts a compass bearing in degrees to radians.
pub fn azimuth_from_degrees(deg: f64) -> f64 {
    deg * PI / 180.0
}

//! Maximum-likelihood estimation of the mean-reversion rates.
//!
//! Each filter step predicts the power with mean `Ȳ` and variance `F`. The
//! observed power is modelled as log-normal with those two moments, and the
//! negative log-likelihood of the whole sequence is minimized over
//! `φ = ln β`, which keeps every rate positive without constraints.

mod newton;
mod pso;
mod trace;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{run_filter, Detection, FilterBelief, FilterKind, FilterOptions, StepDiagnostics};
use crate::measurement::{AntennaConfig, MeasurementModel};
use crate::movement::MovementParams;

pub use newton::{newton_optimize, NewtonConfig};
pub use pso::{pso_optimize, PsoConfig};
pub use trace::{OptimizationTrace, TraceEntry};

/// Rates used as the starting guess when none is configured.
pub const DEFAULT_INITIAL_BETA: [f64; 3] = [3e-3, 5.1e-4, 5e-5];

/// Log-normal parameters `(μ, σ²)` whose mean is `ybar` and variance `f`.
pub fn lognormal_moments(ybar: f64, f: f64) -> Result<(f64, f64)> {
    if !(ybar > 0.0 && ybar.is_finite()) {
        return Err(Error::invalid(format!("predicted power must be > 0, got {ybar}")));
    }
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::invalid(format!("predicted variance must be >= 0, got {f}")));
    }
    let sigma2 = (f / (ybar * ybar)).ln_1p();
    Ok((ybar.ln() - 0.5 * sigma2, sigma2))
}

/// One log-domain likelihood contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodTerm {
    pub mu: f64,
    pub sigma2: f64,
    pub log_y: f64,
    pub v: f64,
}

impl LikelihoodTerm {
    /// `½ln(2π) + ln σ + v²/(2σ²)`.
    pub fn nll(&self) -> f64 {
        0.5 * (2.0 * PI).ln() + 0.5 * self.sigma2.ln() + 0.5 * self.v * self.v / self.sigma2
    }
}

/// Floors applied before taking logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LikelihoodFloors {
    pub sigma2: f64,
    /// Observed power floor as a multiple of `P0`.
    pub power: f64,
}

impl Default for LikelihoodFloors {
    fn default() -> Self {
        LikelihoodFloors {
            sigma2: 1e-12,
            power: 1e-3,
        }
    }
}

/// Starting belief of every filter run inside the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[allow(clippy::large_enum_variant)]
pub enum InitialBelief {
    /// [`FilterBelief::default_for`] each segment.
    #[default]
    NearFirstAntenna,
    Fixed(FilterBelief),
}

/// Everything the likelihood depends on apart from `φ`.
#[derive(Debug, Clone)]
pub struct LikelihoodProblem {
    /// Independent detection sequences; the filter restarts for each.
    pub segments: Vec<Vec<Detection>>,
    pub init: InitialBelief,
    pub towers: Vec<AntennaConfig>,
    pub model: MeasurementModel,
    /// Diffusion strengths, held fixed.
    pub sigma: [f64; 3],
    pub kind: FilterKind,
    pub options: FilterOptions,
    pub floors: LikelihoodFloors,
}

impl LikelihoodProblem {
    pub fn new(
        detections: Vec<Detection>,
        towers: Vec<AntennaConfig>,
        model: MeasurementModel,
        kind: FilterKind,
    ) -> Self {
        LikelihoodProblem {
            segments: vec![detections],
            init: InitialBelief::default(),
            towers,
            model,
            sigma: MovementParams::DEFAULT_SIGMA,
            kind,
            options: FilterOptions::default(),
            floors: LikelihoodFloors::default(),
        }
    }

    pub fn with_init(mut self, init: InitialBelief) -> Self {
        self.init = init;
        self
    }

    pub fn with_sigma(mut self, sigma: [f64; 3]) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn params_for(&self, phi: &[f64]) -> Result<MovementParams> {
        if phi.len() != 3 || phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("phi must be 3 finite values, got {phi:?}")));
        }
        MovementParams::new([phi[0].exp(), phi[1].exp(), phi[2].exp()], self.sigma)
    }

    fn initial_belief(&self, segment: &[Detection]) -> Result<FilterBelief> {
        match self.init {
            InitialBelief::Fixed(b) => Ok(b),
            InitialBelief::NearFirstAntenna => FilterBelief::default_for(segment, &self.towers),
        }
    }

    /// Likelihood terms for every applied observation, in order.
    pub fn terms(&self, phi: &[f64]) -> Result<Vec<LikelihoodTerm>> {
        let params = self.params_for(phi)?;
        let total: usize = self.segments.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(total);
        let mut saturated = 0;
        for segment in &self.segments {
            if segment.is_empty() {
                continue;
            }
            let init = self.initial_belief(segment)?;
            let run = run_filter(
                segment,
                &init,
                &params,
                &self.towers,
                &self.model,
                self.kind,
                &self.options,
            )?;
            for (k, d) in run.diags.iter().enumerate() {
                saturated += usize::from(d.saturated);
                if d.skipped {
                    continue;
                }
                out.push(self.term(d).map_err(|e| Error::FilterStep {
                    step: k,
                    source: Box::new(e),
                })?);
            }
        }
        if total > 0 && saturated == total {
            return Err(Error::data(
                "every detection is saturated; the likelihood is uninformative",
            ));
        }
        if out.is_empty() {
            return Err(Error::data("no usable detections for the likelihood"));
        }
        Ok(out)
    }

    fn term(&self, d: &StepDiagnostics) -> Result<LikelihoodTerm> {
        let (mu, sigma2) = lognormal_moments(d.ybar, d.f.max(0.0))?;
        let sigma2 = sigma2.max(self.floors.sigma2);
        let log_y = d.y.max(self.floors.power * self.model.calibration.p0).ln();
        Ok(LikelihoodTerm {
            mu,
            sigma2,
            log_y,
            v: log_y - mu,
        })
    }

    /// Negative log-likelihood including the `(n/2)·ln 2π` constant.
    pub fn nll(&self, phi: &[f64]) -> Result<f64> {
        Ok(self.terms(phi)?.iter().map(LikelihoodTerm::nll).sum())
    }
}

pub fn negative_log_likelihood(phi: &[f64], problem: &LikelihoodProblem) -> Result<f64> {
    problem.nll(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Newton,
    Pso,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "newton" => Ok(Method::Newton),
            "pso" => Ok(Method::Pso),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected newton|pso)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Newton => "newton",
            Method::Pso => "pso",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Newton starting point in `ln β`.
    pub init_phi: [f64; 3],
    pub newton: NewtonConfig,
    pub pso: PsoConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: Method::Newton,
            init_phi: DEFAULT_INITIAL_BETA.map(f64::ln),
            newton: NewtonConfig::default(),
            pso: PsoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub params: MovementParams,
    pub phi: [f64; 3],
    pub nll: f64,
    pub trace: OptimizationTrace,
}

/// Fits `β` by minimizing the likelihood with the configured method.
pub fn estimate_parameters(problem: &LikelihoodProblem, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    let objective = |phi: &[f64]| problem.nll(phi);
    let (phi, trace) = match cfg.method {
        Method::Newton => newton_optimize(objective, &cfg.init_phi, &cfg.newton)?,
        Method::Pso => {
            if cfg.pso.init_box.len() != 3 {
                return Err(Error::Config(format!(
                    "PSO box must have 3 dimensions for (phi_x, phi_y, phi_z), got {}",
                    cfg.pso.init_box.len()
                )));
            }
            pso_optimize(objective, &cfg.pso)?
        }
    };
    let phi: [f64; 3] = [phi[0], phi[1], phi[2]];
    let params = problem.params_for(&phi)?;
    let nll = trace.last().map(|e| e.best_nll).unwrap_or(f64::NAN);
    Ok(EstimateResult {
        params,
        phi,
        nll,
        trace,
    })
}

//! JSON configuration schemas and their resolution into library types.

use std::path::Path;

use avitrack::{
    AntennaSelection, Calibration, EstimatorConfig, Execution, FilterBelief, Method, MovementParams, SimScenario,
    StateVector,
};
use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files::{antennas, TowerEntry};

/// Uniform detection schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub start: f64,
    pub dt: f64,
    pub count: usize,
    /// Fraction of `dt` by which each time may be shifted.
    #[serde(default)]
    pub jitter: f64,
}

fn yes() -> bool {
    true
}

/// `simulate --config`: a scenario with its towers and calibration inline.
/// Exactly one of `detection_times` and `grid` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub params: MovementParams,
    pub init_state: [f64; 5],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub towers: Vec<TowerEntry>,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub receiver_noise: bool,
    #[serde(default)]
    pub selection: AntennaSelection,
}

impl ScenarioFile {
    pub fn to_scenario(&self, source: &Path) -> Result<SimScenario> {
        let detection_times = match (&self.detection_times, &self.grid) {
            (Some(t), None) => t.clone(),
            (None, Some(g)) => avitrack::detection_grid(g.start, g.dt, g.count, g.jitter, self.seed)
                .map_err(|e| CliError::config(source, format!("grid: {e}")))?,
            _ => {
                return Err(CliError::config(
                    source,
                    "exactly one of \"detection_times\" and \"grid\" is required",
                ))
            }
        };
        let scenario = SimScenario {
            params: self.params,
            init_state: StateVector::from_array(self.init_state),
            detection_times,
            towers: antennas(&self.towers, source)?,
            calibration: self.calibration,
            seed: self.seed,
            receiver_noise: self.receiver_noise,
            selection: self.selection,
        };
        scenario
            .validate()
            .map_err(|e| CliError::config(source, e.to_string()))?;
        Ok(scenario)
    }
}

/// `estimate --config`. Unset fields keep the library defaults;
/// `max_iters` applies to whichever method runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerFile {
    pub method: Option<Method>,
    pub swarm_size: Option<usize>,
    pub max_iters: Option<usize>,
    pub inertia: Option<f64>,
    pub cognitive: Option<f64>,
    pub social: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub init_phi: Option<[f64; 3]>,
    pub init_beta: Option<[f64; 3]>,
    pub init_box: Option<Vec<[f64; 2]>>,
    pub velocity_clamp: Option<f64>,
    pub execution: Option<Execution>,
}

impl OptimizerFile {
    /// Applies the file over the defaults, then the command-line overrides.
    pub fn resolve(&self, source: &str, method: Option<Method>, seed: Option<u64>) -> Result<EstimatorConfig> {
        let bad = |m: String| CliError::Config {
            path: source.into(),
            message: m,
        };
        let mut cfg = EstimatorConfig::default();
        if let Some(m) = method.or(self.method) {
            cfg.method = m;
        }
        if let Some(n) = self.max_iters {
            cfg.newton.max_iters = n;
            cfg.pso.max_iters = n;
        }
        if let Some(v) = self.swarm_size {
            cfg.pso.swarm_size = v;
        }
        if let Some(v) = self.inertia {
            cfg.pso.inertia = v;
        }
        if let Some(v) = self.cognitive {
            cfg.pso.cognitive = v;
        }
        if let Some(v) = self.social {
            cfg.pso.social = v;
        }
        if let Some(v) = seed.or(self.seed) {
            cfg.pso.seed = v;
        }
        if let Some(v) = self.tol {
            cfg.newton.tol = v;
        }
        if let Some(b) = &self.init_box {
            cfg.pso.init_box = b.clone();
        }
        if let Some(v) = self.velocity_clamp {
            cfg.pso.velocity_clamp = v;
        }
        if let Some(v) = self.execution {
            cfg.pso.execution = v;
        }
        match (self.init_phi, self.init_beta) {
            (Some(_), Some(_)) => return Err(bad("give init_phi or init_beta, not both".into())),
            (Some(phi), None) => cfg.init_phi = phi,
            (None, Some(beta)) => {
                if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                    return Err(bad(format!("init_beta must be positive, got {beta:?}")));
                }
                cfg.init_phi = beta.map(f64::ln);
            }
            (None, None) => {}
        }
        if cfg.init_phi.iter().any(|p| !p.is_finite()) {
            return Err(bad("init_phi must be finite".into()));
        }
        cfg.pso.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }
}

/// Rates and diffusion strengths, as written by `estimate` to `params.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub beta: [f64; 3],
    #[serde(default = "default_sigma")]
    pub sigma: [f64; 3],
}

fn default_sigma() -> [f64; 3] {
    MovementParams::DEFAULT_SIGMA
}

impl ParamsFile {
    pub fn to_params(&self, source: &str) -> Result<MovementParams> {
        MovementParams::new(self.beta, self.sigma).map_err(|e| CliError::core(source, e))
    }
}

/// Initial filter belief. `t` defaults to the first detection time and the
/// covariance to a diagonal of `variances` (or the library default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub mean: [f64; 5],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<[f64; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<[[f64; 5]; 5]>,
}

impl InitFile {
    pub fn to_belief(&self, first_t: f64, source: &Path) -> Result<FilterBelief> {
        let cov = match (self.variances, self.cov) {
            (Some(_), Some(_)) => return Err(CliError::config(source, "give variances or cov, not both")),
            (Some(v), None) => Matrix5::from_diagonal(&Vector5::from(v)),
            (None, Some(rows)) => Matrix5::from_fn(|i, j| rows[i][j]),
            (None, None) => Matrix5::from_diagonal(&Vector5::from(FilterBelief::DEFAULT_VARIANCES)),
        };
        if (cov - cov.transpose()).abs().max() > 0.0 || cov.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config(
                source,
                "initial covariance must be finite and symmetric",
            ));
        }
        if cov.cholesky().is_none() {
            return Err(CliError::config(source, "initial covariance must be positive definite"));
        }
        let mean = StateVector::from_array(self.mean);
        if !mean.is_finite() {
            return Err(CliError::config(source, "initial mean must be finite"));
        }
        Ok(FilterBelief::new(mean, cov, self.t.unwrap_or(first_t)))
    }

    pub fn from_belief(b: &FilterBelief) -> Self {
        InitFile {
            t: Some(b.t),
            mean: b.mean.to_array(),
            variances: None,
            cov: Some(std::array::from_fn(|i| std::array::from_fn(|j| b.cov[(i, j)]))),
        }
    }
}

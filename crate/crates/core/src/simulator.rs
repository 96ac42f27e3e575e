//! Synthetic ground truth and Monte-Carlo oracles.

use std::cmp::Ordering;

use nalgebra::{Matrix5, Vector5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Detection, FilterBelief};
use crate::linalg;
use crate::measurement::{power_to_display, AntennaConfig, Calibration, MeasurementModel};
use crate::movement::{MovementParams, StateVector, TransitionModel};
use crate::par::{self, Execution};

/// Rule deciding which tower reports each simulated detection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AntennaSelection {
    /// Closest tower in 3-D.
    #[default]
    Nearest,
    /// Tower with the largest noiseless field amplitude.
    Strongest,
    /// Towers take turns in the order given.
    RoundRobin,
}

impl std::str::FromStr for AntennaSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(Self::Nearest),
            "strongest" => Ok(Self::Strongest),
            "round-robin" | "roundrobin" => Ok(Self::RoundRobin),
            other => Err(Error::invalid(format!("unknown antenna selection '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub params: MovementParams,
    pub init_state: StateVector,
    pub detection_times: Vec<f64>,
    pub towers: Vec<AntennaConfig>,
    pub calibration: Calibration,
    pub seed: u64,
    /// Draw receiver noise; when false every `γ` is zero.
    pub receiver_noise: bool,
    pub selection: AntennaSelection,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.calibration.validate()?;
        if !self.init_state.is_finite() {
            return Err(Error::invalid("initial state has non-finite components"));
        }
        if self.towers.is_empty() {
            return Err(Error::invalid("scenario has no towers"));
        }
        for t in &self.towers {
            t.validate()?;
        }
        if self.detection_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("detection times must be finite"));
        }
        if let Some(k) = self.detection_times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "detection times must strictly increase (index {})",
                k + 1
            )));
        }
        Ok(())
    }
}

/// `count` times starting at `start`, nominally `dt` apart, each shifted by
/// up to `±jitter·dt/2` (`0 <= jitter < 1` keeps them increasing).
pub fn detection_grid(start: f64, dt: f64, count: usize, jitter: f64, seed: u64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(0.0..1.0).contains(&jitter) {
        return Err(Error::invalid(format!(
            "need dt > 0 and 0 <= jitter < 1, got dt={dt}, jitter={jitter}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|k| {
            let shift = if jitter > 0.0 && k > 0 {
                rng.random_range(-0.5..0.5) * jitter * dt
            } else {
                0.0
            };
            start + k as f64 * dt + shift
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub detections: Vec<Detection>,
}

impl GroundTruth {
    pub fn saturated_fraction(&self, cal: &Calibration) -> f64 {
        if self.detections.is_empty() {
            return 0.0;
        }
        let n = self
            .detections
            .iter()
            .filter(|d| cal.is_saturated(f64::from(d.z)))
            .count();
        n as f64 / self.detections.len() as f64
    }
}

/// Closest tower in 3-D, ties broken by the lexicographically smallest id.
pub fn nearest_tower<'a>(state: &StateVector, towers: &'a [AntennaConfig]) -> Option<&'a AntennaConfig> {
    let p = state.position();
    towers.iter().min_by(|a, b| {
        let da = (a.position - p).norm_squared();
        let db = (b.position - p).norm_squared();
        da.partial_cmp(&db)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    })
}

/// Tower with the largest noiseless amplitude, ties broken by id.
pub fn strongest_tower<'a>(
    state: &StateVector,
    towers: &'a [AntennaConfig],
    model: &MeasurementModel,
) -> Result<&'a AntennaConfig> {
    let mut best: Option<(&AntennaConfig, f64)> = None;
    for t in towers {
        let xi = model.field_amplitude(state, t)?;
        best = match best {
            Some((b, bx)) if bx > xi || (bx == xi && b.id <= t.id) => Some((b, bx)),
            _ => Some((t, xi)),
        };
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::invalid("scenario has no towers"))
}

pub fn simulate(scenario: &SimScenario) -> Result<GroundTruth> {
    simulate_with(scenario, &MeasurementModel::new(scenario.calibration))
}

/// Samples a trajectory on the scenario's time grid and turns each state
/// into an integer display reading at the tower chosen by the scenario's
/// selection rule.
pub fn simulate_with(scenario: &SimScenario, model: &MeasurementModel) -> Result<GroundTruth> {
    scenario.validate()?;
    let cal = &model.calibration;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let n = scenario.detection_times.len();
    let mut truth = GroundTruth {
        times: scenario.detection_times.clone(),
        states: Vec::with_capacity(n),
        detections: Vec::with_capacity(n),
    };
    let mut state = scenario.init_state;
    for (k, &t) in scenario.detection_times.iter().enumerate() {
        if k > 0 {
            let dt = t - scenario.detection_times[k - 1];
            state = TransitionModel::new(&scenario.params, dt)?.sample(&state, &mut rng)?;
        }
        let draw: f64 = rng.sample(StandardNormal);
        let gamma = if scenario.receiver_noise { draw } else { 0.0 };
        let tower = match scenario.selection {
            AntennaSelection::Nearest => nearest_tower(&state, &scenario.towers).expect("validated non-empty"),
            AntennaSelection::Strongest => strongest_tower(&state, &scenario.towers, model)?,
            AntennaSelection::RoundRobin => &scenario.towers[k % scenario.towers.len()],
        };
        let y = model.received_power(&state, gamma, tower)?;
        let z = power_to_display(y, cal)?.round().clamp(cal.z_min, cal.z_max);
        truth.states.push(state);
        truth.detections.push(Detection::new(t, tower.id.clone(), z as u32));
    }
    Ok(truth)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub samples: usize,
    pub seed: u64,
    pub receiver_noise: bool,
    pub execution: Execution,
}

impl MonteCarloConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        MonteCarloConfig {
            samples,
            seed,
            receiver_noise: true,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerMoments {
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
}

impl PowerMoments {
    pub fn standard_error(&self) -> f64 {
        (self.variance / self.samples as f64).sqrt()
    }
}

const MC_CHUNK: usize = 4096;

/// Sample mean and variance of the received power for states drawn from
/// `N(mean, cov)` and, optionally, receiver noise `γ ~ N(0, 1)`.
///
/// Samples are drawn in fixed-size chunks, each from its own ChaCha stream,
/// and merged in chunk order; the result does not depend on threading.
pub fn monte_carlo_power_moments(
    mean: &StateVector,
    cov: &Matrix5<f64>,
    antenna: &AntennaConfig,
    model: &MeasurementModel,
    cfg: &MonteCarloConfig,
) -> Result<PowerMoments> {
    if cfg.samples < 1000 {
        return Err(Error::invalid(format!(
            "need at least 1000 samples, got {}",
            cfg.samples
        )));
    }
    let l = linalg::psd_sqrt(cov)?;
    let chunks = cfg.samples.div_ceil(MC_CHUNK);
    let partial = par::map_indexed(cfg.execution, chunks, |c| -> Result<(f64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c as u64);
        let count = MC_CHUNK.min(cfg.samples - c * MC_CHUNK);
        let (mut n, mut m, mut m2) = (0.0, 0.0, 0.0);
        for _ in 0..count {
            let z = Vector5::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let g: f64 = rng.sample(StandardNormal);
            let state = StateVector(mean.0 + l * z);
            let y = model.received_power(&state, if cfg.receiver_noise { g } else { 0.0 }, antenna)?;
            n += 1.0;
            let d = y - m;
            m += d / n;
            m2 += d * (y - m);
        }
        Ok((n, m, m2))
    });
    let (mut n, mut m, mut m2) = (0.0, 0.0, 0.0);
    for part in partial {
        let (nb, mb, m2b) = part?;
        let total = n + nb;
        let d = mb - m;
        m += d * nb / total;
        m2 += m2b + d * d * n * nb / total;
        n = total;
    }
    Ok(PowerMoments {
        mean: m,
        variance: m2 / (n - 1.0),
        samples: cfg.samples,
    })
}

/// Sum of squared horizontal position errors between two state sequences.
pub fn horizontal_sq_error(truth: &[StateVector], estimate: &[StateVector]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::data(format!(
            "track length {} does not match ground truth length {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a.px() - b.px()).powi(2) + (a.py() - b.py()).powi(2))
        .sum())
}

/// `ε` of a filter track against simulated ground truth.
pub fn evaluate_track(truth: &GroundTruth, track: &[FilterBelief]) -> Result<f64> {
    let est: Vec<StateVector> = track.iter().map(|b| b.mean).collect();
    horizontal_sq_error(&truth.states, &est)
}

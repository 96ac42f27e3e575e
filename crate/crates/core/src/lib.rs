//! Tracking of radio-tagged targets from signal-strength detections.
//!
//! The crate is split along the estimation pipeline:
//!
//! * [`movement`]: Ornstein-Uhlenbeck style motion model (transition and
//!   process-noise matrices, sampling).
//! * [`measurement`]: display number / received power link and the noisy
//!   power function of the target state.
//! * [`filter`]: sigma points, unscented moments, and the UKF / EKF
//!   recursions.
//! * [`estimation`]: log-normal innovation likelihood and the Newton and
//!   particle-swarm optimizers used to fit the mean-reversion rates.
//! * [`simulator`]: synthetic ground truth and Monte-Carlo moment oracles.
//!
//! Data-parallel loops (swarm evaluation, Monte-Carlo batches) go through
//! [`par`], which falls back to sequential iteration when the `parallel`
//! feature is disabled.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod filter;
pub mod linalg;
pub mod measurement;
pub mod movement;
pub mod par;
pub mod simulator;

pub use error::{Error, Result};
pub use estimation::{
    estimate_parameters, lognormal_moments, negative_log_likelihood, newton_optimize, pso_optimize, EstimateResult,
    EstimatorConfig, InitialBelief, LikelihoodProblem, LikelihoodTerm, Method, NewtonConfig, OptimizationTrace,
    PsoConfig,
};
pub use filter::{
    ekf_step, run_filter, sigma_points, ukf_step, ut_moments, AugmentedBelief, Detection, FilterBelief, FilterKind,
    FilterOptions, FilterRun, StepDiagnostics,
};
pub use measurement::{
    display_to_power, field_amplitude, power_to_display, received_power, AntennaConfig, Calibration, CosineLobe,
    FieldModel, MeasurementModel, Pattern, PowerObservation,
};
pub use movement::{
    process_noise_cov, propagate, sample_transition, transition_matrix, MovementParams, StateVector, TransitionModel,
};
pub use par::Execution;
pub use simulator::{
    detection_grid, evaluate_track, monte_carlo_power_moments, simulate, simulate_with, AntennaSelection, GroundTruth,
    MonteCarloConfig, PowerMoments, SimScenario,
};

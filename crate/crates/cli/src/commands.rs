//! Subcommands. Each one reads its inputs, writes its artifacts into
//! `--out-dir`, and returns a [`RunReport`] that is also saved as
//! `report.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use avitrack::{
    estimate_parameters, run_filter, simulate_with, AntennaConfig, Calibration, FilterBelief, FilterKind,
    FilterOptions, InitialBelief, LikelihoodProblem, MeasurementModel, Method, MovementParams, StateVector,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{InitFile, OptimizerFile, ParamsFile, ScenarioFile};
use crate::error::{CliError, Result};
use crate::files::{self, TowerEntry, TruthTable};

#[derive(Debug, Parser)]
#[command(
    name = "avitrack",
    version,
    about = "Track radio-tagged targets from tower signal-strength detections"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a ground-truth trajectory and its detections from a scenario.
    #[command(
        after_help = "Errors: io (unreadable config, unwritable out-dir), parse (malformed JSON), \
config (invalid scenario), invalid-argument / numerical (simulation failure)."
    )]
    Simulate(SimulateArgs),
    /// Run the EKF or UKF over a detection file.
    #[command(
        after_help = "Errors: io, parse (bad CSV row, with line number; Z outside [0, 255]; \
duplicate timestamp), config (bad towers/calibration/init/params), data (unknown antenna id), \
filter / numerical (the filter could not proceed)."
    )]
    Track(TrackArgs),
    /// Fit the mean-reversion rates by maximum likelihood.
    #[command(
        after_help = "Errors: io, parse, config (bad optimizer file), data (no usable detections), \
optimization (Newton could not find a finite step)."
    )]
    Estimate(EstimateArgs),
    /// Sum of squared horizontal errors between a truth and a track file.
    #[command(after_help = "Errors: io, parse, data (files differ in length or timestamps).")]
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Inputs shared by `track` and `estimate`.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Detections CSV (t,antenna_id,Z).
    #[arg(long)]
    pub detections: PathBuf,
    /// Towers JSON.
    #[arg(long)]
    pub towers: PathBuf,
    /// Calibration JSON {b, P0, Zm, ZM}; defaults when omitted.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value = "ukf")]
    pub kind: FilterKind,
    /// Initial belief JSON {t?, mean, variances? | cov?}; defaults to a
    /// point 100 m along the first detecting antenna's boresight.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Diffusion strengths sx,sy,sz.
    #[arg(long, value_parser = triple)]
    pub sigma: Option<[f64; 3]>,
    /// Predict through saturated (Z = ZM) records instead of applying them.
    #[arg(long)]
    pub skip_saturated: bool,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Parameters JSON {beta, sigma} as written by `estimate`.
    #[arg(long, conflicts_with = "beta")]
    pub params: Option<PathBuf>,
    /// Rates bx,by,bz; defaults to 3e-3,5.1e-4,5e-5.
    #[arg(long, value_parser = triple)]
    pub beta: Option<[f64; 3]>,
    /// Ground-truth CSV; adds epsilon to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub method: Option<Method>,
    /// PSO seed; overrides the optimizer file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimizer JSON {method, swarm_size, max_iters, inertia, cognitive,
    /// social, seed, tol, init_phi | init_beta, ...}.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub track: PathBuf,
    /// Also write report.json here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub method: Method,
    pub beta: [f64; 3],
    pub phi: [f64; 3],
    pub nll: f64,
    pub iterations: usize,
}

/// Summary of one subcommand run. File names are relative to the output
/// directory; `config` echoes every resolved input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repairs: Option<Vec<usize>>,
    pub config: serde_json::Value,
}

impl RunReport {
    fn new(command: &str, config: serde_json::Value) -> Self {
        RunReport {
            command: command.into(),
            outputs: BTreeMap::new(),
            epsilon: None,
            estimate: None,
            repairs: None,
            config,
        }
    }

    fn output(&mut self, name: &str, file: &str) {
        self.outputs.insert(name.into(), file.into());
    }
}

pub fn run(cli: &Cli) -> Result<RunReport> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Track(a) => cmd_track(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn finish(dir: &Path, mut report: RunReport) -> Result<RunReport> {
    report.output("report", "report.json");
    files::write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn shown(p: &Path) -> String {
    p.display().to_string()
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunReport> {
    let mut file: ScenarioFile = files::read_json(&args.config)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    let scenario = file.to_scenario(&args.config)?;
    let truth = simulate_with(&scenario, &MeasurementModel::new(scenario.calibration))
        .map_err(|e| CliError::core(shown(&args.config), e))?;

    let dir = &args.out_dir;
    out_dir(dir)?;
    files::write_truth(&dir.join("truth.csv"), &TruthTable::from(&truth))?;
    let records: Vec<_> = truth.detections.iter().map(files::DetectionRecord::from).collect();
    files::write_detections(&dir.join("detections.csv"), &records)?;
    files::write_json(&dir.join("towers.json"), &file.towers)?;
    files::write_json(&dir.join("calibration.json"), &file.calibration)?;

    let mut report = RunReport::new("simulate", json!({ "scenario": file }));
    report.output("truth", "truth.csv");
    report.output("detections", "detections.csv");
    report.output("towers", "towers.json");
    report.output("calibration", "calibration.json");
    finish(dir, report)
}

/// Loaded and validated `track` / `estimate` inputs.
struct Inputs {
    detections: Vec<avitrack::Detection>,
    tower_entries: Vec<TowerEntry>,
    towers: Vec<AntennaConfig>,
    calibration: Calibration,
    init: FilterBelief,
    options: FilterOptions,
}

fn load(data: &DataArgs) -> Result<Inputs> {
    let records = files::ingest_detections(&data.detections)?;
    if records.is_empty() {
        return Err(CliError::core(
            shown(&data.detections),
            avitrack::Error::Data("no detections".into()),
        ));
    }
    let (tower_entries, towers) = files::read_towers(&data.towers)?;
    let calibration = files::read_calibration(data.calibration.as_deref())?;
    let detections = files::to_detections(&records);
    let init = match &data.init {
        Some(p) => files::read_json::<InitFile>(p)?.to_belief(detections[0].t, p)?,
        None => {
            FilterBelief::default_for(&detections, &towers).map_err(|e| CliError::core(shown(&data.detections), e))?
        }
    };
    Ok(Inputs {
        detections,
        tower_entries,
        towers,
        calibration,
        init,
        options: FilterOptions {
            skip_saturated: data.skip_saturated,
        },
    })
}

/// Parses `a,b,c` into three finite numbers.
fn triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0f64; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
        if !slot.is_finite() {
            return Err(format!("{p:?} is not finite"));
        }
    }
    Ok(out)
}

fn data_echo(data: &DataArgs, inp: &Inputs) -> serde_json::Value {
    json!({
        "detections": shown(&data.detections),
        "towers": inp.tower_entries,
        "calibration": inp.calibration,
        "kind": data.kind,
        "init": InitFile::from_belief(&inp.init),
        "options": inp.options,
    })
}

pub fn cmd_track(args: &TrackArgs) -> Result<RunReport> {
    let inp = load(&args.data)?;
    let params = match (&args.params, &args.beta) {
        (Some(p), _) => {
            let mut f: ParamsFile = files::read_json(p)?;
            if let Some(s) = args.data.sigma {
                f.sigma = s;
            }
            f.to_params(&shown(p))?
        }
        (None, beta) => {
            let beta = beta.unwrap_or(avitrack::estimation::DEFAULT_INITIAL_BETA);
            let sigma = args.data.sigma.unwrap_or(MovementParams::DEFAULT_SIGMA);
            MovementParams::new(beta, sigma).map_err(|e| CliError::Usage(format!("--beta/--sigma: {e}")))?
        }
    };
    let truth = args.truth.as_deref().map(files::read_truth).transpose()?;

    let model = MeasurementModel::new(inp.calibration);
    let run = run_filter(
        &inp.detections,
        &inp.init,
        &params,
        &inp.towers,
        &model,
        args.data.kind,
        &inp.options,
    )
    .map_err(|e| CliError::core(shown(&args.data.detections), e))?;

    let dir = &args.out_dir;
    out_dir(dir)?;
    files::write_track(&dir.join("track.csv"), &run.track)?;
    files::write_diagnostics(&dir.join("diag.csv"), &run.diags)?;

    let mut config = data_echo(&args.data, &inp);
    config["params"] = json!(params);
    if let Some(p) = &args.truth {
        config["truth"] = json!(shown(p));
    }
    let mut report = RunReport::new("track", config);
    report.output("track", "track.csv");
    report.output("diagnostics", "diag.csv");
    report.repairs = Some(
        run.diags
            .iter()
            .enumerate()
            .filter(|(_, d)| d.repaired)
            .map(|(k, _)| k)
            .collect(),
    );
    if let (Some(truth), Some(path)) = (truth, &args.truth) {
        let states: Vec<StateVector> = run.track.iter().map(|b| b.mean).collect();
        let times: Vec<f64> = run.track.iter().map(|b| b.t).collect();
        report.epsilon = Some(epsilon(&truth, &TruthTable { times, states }, path)?);
    }
    finish(dir, report)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<RunReport> {
    let inp = load(&args.data)?;
    let (opt_file, source) = match &args.config {
        Some(p) => (files::read_json::<OptimizerFile>(p)?, shown(p)),
        None => (OptimizerFile::default(), "--config".to_string()),
    };
    let cfg = opt_file.resolve(&source, args.method, args.seed)?;
    let sigma = args.data.sigma.unwrap_or(MovementParams::DEFAULT_SIGMA);
    let mut problem = LikelihoodProblem::new(
        inp.detections.clone(),
        inp.towers.clone(),
        MeasurementModel::new(inp.calibration),
        args.data.kind,
    )
    .with_init(InitialBelief::Fixed(inp.init))
    .with_sigma(sigma);
    problem.options = inp.options;

    let est = estimate_parameters(&problem, &cfg).map_err(|e| CliError::core(shown(&args.data.detections), e))?;

    let dir = &args.out_dir;
    out_dir(dir)?;
    files::write_trace(&dir.join("trace.csv"), &est.trace)?;
    let params = ParamsFile {
        beta: est.params.betas(),
        sigma,
    };
    files::write_json(&dir.join("params.json"), &params)?;

    let mut config = data_echo(&args.data, &inp);
    config["sigma"] = json!(sigma);
    config["optimizer"] = json!(cfg);
    let mut report = RunReport::new("estimate", config);
    report.output("trace", "trace.csv");
    report.output("params", "params.json");
    report.estimate = Some(EstimateSummary {
        method: cfg.method,
        beta: params.beta,
        phi: est.phi,
        nll: est.nll,
        iterations: est.trace.len().saturating_sub(1),
    });
    finish(dir, report)
}

/// `ε` between two state tables that share their timestamps.
fn epsilon(truth: &TruthTable, track: &TruthTable, track_source: &Path) -> Result<f64> {
    if truth.times.len() != track.times.len() {
        return Err(CliError::core(
            shown(track_source),
            avitrack::Error::Data(format!(
                "truth has {} rows but track has {}",
                truth.times.len(),
                track.times.len()
            )),
        ));
    }
    if let Some(k) = truth
        .times
        .iter()
        .zip(&track.times)
        .position(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(CliError::core(
            shown(track_source),
            avitrack::Error::Data(format!(
                "row {k}: truth t = {} but track t = {}",
                truth.times[k], track.times[k]
            )),
        ));
    }
    avitrack::simulator::horizontal_sq_error(&truth.states, &track.states)
        .map_err(|e| CliError::core(shown(track_source), e))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<RunReport> {
    let truth = files::read_truth(&args.truth)?;
    let track = files::read_track(&args.track)?;
    let eps = epsilon(&truth, &track, &args.track)?;
    let mut report = RunReport::new(
        "evaluate",
        json!({ "truth": shown(&args.truth), "track": shown(&args.track) }),
    );
    report.epsilon = Some(eps);
    match &args.out_dir {
        Some(dir) => {
            out_dir(dir)?;
            finish(dir, report)
        }
        None => Ok(report),
    }
}

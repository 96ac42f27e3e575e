//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use avitrack::filter::{predict, predicted_power_moments, symmetric_sigma_points, ut_moments};
use avitrack::linalg::min_eigenvalue;
use avitrack::measurement::azimuth_from_degrees;
use avitrack::{
    display_to_power, ekf_step, estimate_parameters, evaluate_track, monte_carlo_power_moments, newton_optimize,
    power_to_display, process_noise_cov, pso_optimize, run_filter, simulate, ukf_step, AntennaConfig, Calibration,
    EstimatorConfig, FilterBelief, FilterKind, FilterOptions, FilterRun, GroundTruth, InitialBelief, LikelihoodProblem,
    MeasurementModel, Method, MonteCarloConfig, MovementParams, NewtonConfig, PowerObservation, PsoConfig, StateVector,
    TransitionModel,
};
use avitrack_cli::config::{InitFile, ScenarioFile};
use common::*;
use nalgebra::{Matrix5, Matrix6, Vector3, Vector5, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------------------
// Filter hygiene, collected over every track computed below.

#[derive(Default)]
struct Hygiene {
    runs: usize,
    steps: usize,
    repairs: usize,
    zero_innovation_checks: usize,
    violations: Vec<String>,
}

impl Hygiene {
    fn check(&mut self, label: &str, run: &FilterRun) {
        self.runs += 1;
        self.steps += run.track.len();
        self.repairs += run.repairs();
        if run.diags.len() != run.track.len() {
            self.violations.push(format!(
                "{label}: {} diagnostics for {} steps",
                run.diags.len(),
                run.track.len()
            ));
        }
        for (k, b) in run.track.iter().enumerate() {
            let scale = b.cov.abs().max().max(1.0);
            let asym = (b.cov - b.cov.transpose()).abs().max();
            let min_eig = min_eigenvalue(&b.cov);
            if asym > 1e-10 * scale || min_eig < -1e-9 * scale || !b.mean.is_finite() {
                self.violations.push(format!(
                    "{label} step {k}: asymmetry {asym:.2e}, min eigenvalue {min_eig:.2e}"
                ));
            }
        }
    }

    /// Re-applies selected steps of a run with the observation replaced by
    /// the predicted power; the posterior mean must equal the prior mean.
    fn zero_innovation(
        &mut self,
        label: &str,
        gt: &GroundTruth,
        run: &FilterRun,
        params: &MovementParams,
        towers: &[AntennaConfig],
        model: &MeasurementModel,
    ) {
        for k in (25..run.track.len()).step_by(50) {
            let prev = &run.track[k - 1];
            let det = &gt.detections[k];
            let antenna = towers.iter().find(|a| a.id == det.antenna).unwrap();
            let tm = TransitionModel::new(params, det.t - prev.t).unwrap();
            let prior = predict(prev, &tm, det.t);
            for kind in [FilterKind::Ukf, FilterKind::Ekf] {
                let ybar = predicted_power_moments(kind, &prior, antenna, model).unwrap().ybar;
                let obs = PowerObservation {
                    t: det.t,
                    antenna: det.antenna.clone(),
                    z: f64::from(det.z),
                    y: ybar,
                    saturated: false,
                };
                let step = match kind {
                    FilterKind::Ukf => ukf_step(prev, &obs, &tm, antenna, model),
                    FilterKind::Ekf => ekf_step(prev, &obs, &tm, antenna, model),
                };
                let (post, _) = step.unwrap();
                let shift = (post.mean.0 - prior.mean.0).abs().max();
                self.zero_innovation_checks += 1;
                if shift > 1e-10 {
                    self.violations.push(format!(
                        "{label} step {k} {kind}: zero innovation moved the mean by {shift:.2e}"
                    ));
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The reference tracking scenario (towers on a ring, round-robin polling).

struct Replicate {
    gt: GroundTruth,
    towers: Vec<AntennaConfig>,
    init: FilterBelief,
}

fn replicate(count: usize, seed: u64) -> Replicate {
    let src = Path::new("scenario.json");
    let file: ScenarioFile = serde_json::from_str(&scenario_json(count, seed)).unwrap();
    let scenario = file.to_scenario(src).unwrap();
    let gt = simulate(&scenario).unwrap();
    let init: InitFile = serde_json::from_str(INIT_JSON).unwrap();
    let init = init.to_belief(gt.detections[0].t, src).unwrap();
    Replicate {
        gt,
        towers: scenario.towers,
        init,
    }
}

impl Replicate {
    fn problem(&self, model: &MeasurementModel) -> LikelihoodProblem {
        LikelihoodProblem::new(
            self.gt.detections.clone(),
            self.towers.clone(),
            model.clone(),
            FilterKind::Ukf,
        )
        .with_init(InitialBelief::Fixed(self.init))
        .with_sigma(SIGMA)
    }

    fn track(&self, params: &MovementParams, kind: FilterKind, model: &MeasurementModel) -> FilterRun {
        run_filter(
            &self.gt.detections,
            &self.init,
            params,
            &self.towers,
            model,
            kind,
            &FilterOptions::default(),
        )
        .unwrap()
    }
}

// ---------------------------------------------------------------------------

fn qx_by_quadrature(beta: f64, sigma: f64, dt: f64) -> [f64; 3] {
    let s2 = sigma * sigma;
    let gain = move |tau: f64| -(-beta * tau).exp_m1() / beta;
    // Split at multiples of the relaxation time so every piece is smooth
    // on its own scale.
    let mut cuts = vec![0.0];
    let mut c = 1.0 / beta;
    while c < dt {
        cuts.push(c);
        c *= 4.0;
    }
    cuts.push(dt);
    let integrate = |f: &dyn Fn(f64) -> f64| -> f64 {
        cuts.windows(2)
            .map(|w| quadrature::double_exponential::integrate(f, w[0], w[1], 1e-16).integral)
            .sum()
    };
    [
        integrate(&|t| gain(t) * gain(t) * s2),
        integrate(&|t| gain(t) * (-beta * t).exp() * s2),
        integrate(&|t| (-2.0 * beta * t).exp() * s2),
    ]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for beta in [1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 2.0] {
        for dt in [0.01, 0.5, 1.0, 10.0, 100.0, 1000.0] {
            let sigma = [0.7, 1.3, 0.2];
            let p = MovementParams::new([beta, beta * 2.0, beta], sigma).unwrap();
            let q = process_noise_cov(&p, dt).unwrap();
            for (axis, (i, s)) in [(0usize, sigma[0]), (2, sigma[1])].into_iter().enumerate() {
                let b = p.betas()[axis];
                let oracle = qx_by_quadrature(b, s, dt);
                for (got, want) in [q[(i, i)], q[(i, i + 1)], q[(i + 1, i + 1)]].into_iter().zip(oracle) {
                    worst = worst.max((got - want).abs() / want.abs());
                }
                cases += 1;
            }
            let qz = qx_by_quadrature(beta, sigma[2], dt)[2];
            worst = worst.max((q[(4, 4)] - qz).abs() / qz);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-9 && within(elapsed, 1.0),
        format!(
            "{cases} horizontal blocks + vertical terms, worst relative error {worst:.2e}, {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let model = MeasurementModel::default();
    let belief = FilterBelief::new(
        StateVector::new(0.0, 0.0, 0.0, 0.0, 5.4),
        Matrix5::from_diagonal(&Vector5::new(2000.0, 1.0, 5000.0, 1.0, 1.0)),
        0.0,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut wins = 0;
    let mut rows = Vec::new();
    for i in 0..10u64 {
        let range = rng.random_range(300.0..1500.0);
        let bearing: f64 = rng.random_range(0.0..360.0);
        let pos = Vector3::new(
            range * bearing.to_radians().sin(),
            range * bearing.to_radians().cos(),
            10.0,
        );
        let facing = (bearing + 180.0 + rng.random_range(-60.0..60.0)).rem_euclid(360.0);
        let antenna = AntennaConfig::new(format!("P{i}"), pos, azimuth_from_degrees(facing));
        let ut = predicted_power_moments(FilterKind::Ukf, &belief, &antenna, &model)
            .unwrap()
            .ybar;
        let lin = predicted_power_moments(FilterKind::Ekf, &belief, &antenna, &model)
            .unwrap()
            .ybar;
        let mc = monte_carlo_power_moments(
            &belief.mean,
            &belief.cov,
            &antenna,
            &model,
            &MonteCarloConfig::new(100_000, i),
        )
        .unwrap()
        .mean;
        if (ut - mc).abs() <= (lin - mc).abs() {
            wins += 1;
        }
        rows.push(format!("{mc:.3e}/{ut:.3e}/{lin:.3e}"));
    }
    let elapsed = start.elapsed();
    outcome(
        wins >= 9 && within(elapsed, 30.0),
        format!(
            "UT closer to Monte-Carlo in {wins}/10 placements (MC/UT/linearized: {}), {:.2} s",
            rows[..3].join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_affine = 0.0f64;
    let mut worst_quad = 0.0f64;
    let mut worst_cubic = 0.0f64;
    for _ in 0..20 {
        let s = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let p = s * s.transpose() + Matrix6::identity() * 0.1;
        let m = Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let a = Vector6::from_fn(|_, _| rng.random_range(-2.0..2.0));
        let c: f64 = rng.random_range(-5.0..5.0);
        let b = {
            let r = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            (r + r.transpose()) * 0.5
        };
        let pts = symmetric_sigma_points(&m, &p).unwrap();

        let lin = ut_moments(&pts, |x| Ok(a.dot(x) + c)).unwrap();
        worst_affine = worst_affine
            .max((lin.ybar - (a.dot(&m) + c)).abs())
            .max((lin.f - (a.transpose() * p * a)[0]).abs())
            .max((lin.pxy - p * a).abs().max());

        // xᵀBx: mean tr(BP) + mᵀBm, cross-covariance 2PBm
        let quad = ut_moments(&pts, |x| Ok((x.transpose() * b * x)[0])).unwrap();
        let mean = (b * p).trace() + (m.transpose() * b * m)[0];
        worst_quad = worst_quad
            .max((quad.ybar - mean).abs())
            .max((quad.pxy - 2.0 * p * b * m).abs().max());

        let cubic = ut_moments(&pts, |x| Ok(a.dot(&(x - m)).powi(3))).unwrap();
        worst_cubic = worst_cubic.max(cubic.ybar.abs());
    }
    outcome(
        worst_affine < 1e-8 && worst_quad < 1e-8 && worst_cubic < 1e-10,
        format!("affine {worst_affine:.1e}, quadratic {worst_quad:.1e}, centred cubic mean {worst_cubic:.1e}"),
    )
}

fn criterion_4(hygiene: &mut Hygiene) -> Outcome {
    let start = Instant::now();
    let model = MeasurementModel::default();
    let guess = MovementParams::new(avitrack::estimation::DEFAULT_INITIAL_BETA, SIGMA).unwrap();
    let mut nll_ok = 0;
    let mut eps_ok = 0;
    let mut notes = Vec::new();
    for seed in 0..10u64 {
        let rep = replicate(500, seed);
        let problem = rep.problem(&model);
        let nll_true = problem.nll(&BETA.map(f64::ln)).unwrap();
        let newton = estimate_parameters(&problem, &EstimatorConfig::default()).unwrap();
        let mut cfg = EstimatorConfig {
            method: Method::Pso,
            ..Default::default()
        };
        cfg.pso.max_iters = 300;
        cfg.pso.seed = seed;
        let pso = estimate_parameters(&problem, &cfg).unwrap();

        let agree = (newton.nll - pso.nll).abs() <= 0.05 * newton.nll.abs().max(pso.nll.abs());
        if newton.nll <= nll_true + 0.5 && pso.nll <= nll_true + 0.5 && agree {
            nll_ok += 1;
        }

        let fitted = rep.track(&newton.params, FilterKind::Ukf, &model);
        let baseline = rep.track(&guess, FilterKind::Ukf, &model);
        hygiene.check(&format!("recovery seed {seed} fitted"), &fitted);
        hygiene.check(&format!("recovery seed {seed} guess"), &baseline);
        let ratio = evaluate_track(&rep.gt, &fitted.track).unwrap() / evaluate_track(&rep.gt, &baseline.track).unwrap();
        if ratio <= 0.5 {
            eps_ok += 1;
        }
        notes.push(format!(
            "seed {seed}: NLL true {nll_true:.1} newton {:.1} pso {:.1}, eps ratio {ratio:.2}",
            newton.nll, pso.nll
        ));
    }
    let elapsed = start.elapsed();
    for n in &notes {
        println!("    {n}");
    }
    outcome(
        nll_ok == 10 && eps_ok >= 8 && within(elapsed, 600.0),
        format!(
            "NLL targets met in {nll_ok}/10 replicates, eps(estimated) <= 0.5 eps(guess) in {eps_ok}/10, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_5(hygiene: &mut Hygiene) -> Outcome {
    let start = Instant::now();
    let model = MeasurementModel::default();
    let (mut ukf, mut ekf) = (Vec::new(), Vec::new());
    for seed in 100..120u64 {
        let rep = replicate(500, seed);
        let est = estimate_parameters(&rep.problem(&model), &EstimatorConfig::default()).unwrap();
        for (kind, sink) in [(FilterKind::Ukf, &mut ukf), (FilterKind::Ekf, &mut ekf)] {
            let run = rep.track(&est.params, kind, &model);
            let label = format!("comparison seed {seed} {kind}");
            hygiene.check(&label, &run);
            hygiene.zero_innovation(&label, &rep.gt, &run, &est.params, &rep.towers, &model);
            sink.push(evaluate_track(&rep.gt, &run.track).unwrap());
        }
    }
    let wins = ukf.iter().zip(&ekf).filter(|(u, e)| u <= e).count();
    let (mu, me) = (median(ukf), median(ekf));
    let elapsed = start.elapsed();
    outcome(
        mu <= me && within(elapsed, 600.0),
        format!(
            "median eps UKF {mu:.4e} vs EKF {me:.4e} over 20 scenarios (UKF lower in {wins}), {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let cal = Calibration::default();
    let mut worst = 0.0f64;
    for z in 1..=254 {
        let z = f64::from(z);
        let y = display_to_power(z, &cal).unwrap();
        let back = power_to_display(y, &cal).unwrap();
        let y2 = display_to_power(back, &cal).unwrap();
        worst = worst.max((back - z).abs()).max((y2 - y).abs() / y);
    }
    let top = PowerObservation::from_display(0.0, "T", 255.0, &cal).unwrap();
    let finite = top.y.is_finite() && top.y > display_to_power(254.0, &cal).unwrap();
    outcome(
        worst < 1e-9 && finite && top.saturated,
        format!(
            "worst round-trip error {worst:.1e}; Z = 255 maps to {:.4e} W, flagged saturated: {}",
            top.y, top.saturated
        ),
    )
}

fn criterion_7() -> Outcome {
    let sphere = |x: &[f64]| Ok(x.iter().map(|v| v * v).sum::<f64>());
    let pso = PsoConfig {
        swarm_size: 30,
        max_iters: 200,
        init_box: vec![[-5.0, 5.0]; 3],
        seed: 11,
        ..Default::default()
    };
    let (_, ptrace) = pso_optimize(sphere, &pso).unwrap();
    let pbest = ptrace.last().unwrap().best_nll;

    let rosen = |x: &[f64]| {
        Ok(x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum::<f64>())
    };
    let newton = NewtonConfig {
        max_iters: 500,
        tol: 1e-10,
        ..Default::default()
    };
    let (_, ntrace) = newton_optimize(rosen, &[0.0, 0.0, 0.0], &newton).unwrap();
    let nbest = ntrace.last().unwrap().best_nll;
    let iters = ntrace.last().unwrap().iteration;
    let monotone = ptrace.is_monotone() && ntrace.is_monotone();
    outcome(
        pbest < 1e-4 && nbest < 1e-6 && iters <= 500 && monotone,
        format!("PSO sphere {pbest:.2e}; Newton Rosenbrock {nbest:.2e} after {iters} iterations; traces monotone: {monotone}"),
    )
}

fn criterion_8(hygiene: &Hygiene) -> Outcome {
    let shown: Vec<&str> = hygiene.violations.iter().take(3).map(String::as_str).collect();
    outcome(
        hygiene.violations.is_empty() && hygiene.runs > 0 && hygiene.zero_innovation_checks > 0,
        format!(
            "{} runs, {} steps, {} logged repairs, {} zero-innovation checks, {} violations {:?}",
            hygiene.runs,
            hygiene.steps,
            hygiene.repairs,
            hygiene.zero_innovation_checks,
            hygiene.violations.len(),
            shown
        ),
    )
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = tmp.path();
    let scen = write(dir, "scenario.json", &scenario_json(150, 9));
    let init = write(dir, "init.json", INIT_JSON);
    let opt = write(dir, "opt.json", r#"{"swarm_size": 8, "max_iters": 10}"#);
    let sigma = sigma_flag();

    // The same invocations twice over the same paths, snapshotting in between.
    let root = dir.join("run");
    let workflow = || -> Vec<(String, Vec<u8>)> {
        let sim = root.join("sim");
        let mut stdout = Vec::new();
        let mut run = |args: Vec<String>| {
            let out = avitrack(&args);
            assert!(
                out.status.success(),
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            stdout.extend(out.stdout);
        };
        let p = |x: &Path| x.display().to_string();
        let data = |sim: &Path| {
            vec![
                "--detections".to_string(),
                p(&sim.join("detections.csv")),
                "--towers".into(),
                p(&sim.join("towers.json")),
                "--init".into(),
                p(&init),
                "--sigma".into(),
                sigma.clone(),
            ]
        };
        run(vec![
            "simulate".into(),
            "--config".into(),
            p(&scen),
            "--out-dir".into(),
            p(&sim),
        ]);
        for method in ["newton", "pso"] {
            let mut a = vec!["estimate".to_string()];
            a.extend(data(&sim));
            a.extend([
                "--method".into(),
                method.into(),
                "--seed".into(),
                "7".into(),
                "--config".into(),
                p(&opt),
            ]);
            a.extend(["--out-dir".into(), p(&root.join(method))]);
            run(a);
        }
        for kind in ["ukf", "ekf"] {
            let mut a = vec!["track".to_string()];
            a.extend(data(&sim));
            a.extend([
                "--kind".into(),
                kind.into(),
                "--params".into(),
                p(&root.join("newton/params.json")),
            ]);
            a.extend([
                "--truth".into(),
                p(&sim.join("truth.csv")),
                "--out-dir".into(),
                p(&root.join(kind)),
            ]);
            run(a);
            run(vec![
                "evaluate".into(),
                "--truth".into(),
                p(&sim.join("truth.csv")),
                "--track".into(),
                p(&root.join(kind).join("track.csv")),
            ]);
        }
        let mut files = vec![("stdout".to_string(), stdout)];
        for sub in ["sim", "newton", "pso", "ukf", "ekf"] {
            for (name, bytes) in snapshot(&root.join(sub)) {
                files.push((format!("{sub}/{name}"), bytes));
            }
        }
        files
    };
    let a = workflow();
    let b = workflow();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        a.len() == b.len() && differing.is_empty(),
        format!(
            "{} outputs compared across two invocations, differing: {differing:?}",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut hygiene = Hygiene::default();
    let results = vec![
        ("1 process-noise closed forms", criterion_1()),
        ("2 unscented vs linearized moments", criterion_2()),
        ("3 unscented polynomial exactness", criterion_3()),
        ("4 parameter recovery", criterion_4(&mut hygiene)),
        ("5 UKF vs EKF", criterion_5(&mut hygiene)),
        ("6 display round trip", criterion_6()),
        ("7 optimizer sanity", criterion_7()),
        ("8 filter hygiene", criterion_8(&hygiene)),
        ("9 CLI determinism", criterion_9()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        println!(
            "{} criterion {name}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

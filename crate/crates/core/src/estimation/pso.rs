//! Global-best particle swarm optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::OptimizationTrace;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    /// Number of swarm updates after the initial evaluation.
    pub max_iters: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-dimension search range. Particles start uniformly inside it and
    /// may fly outside, but are only evaluated (and can only become a best)
    /// while inside.
    pub init_box: Vec<[f64; 2]>,
    pub seed: u64,
    /// Velocity limit as a fraction of each box width.
    pub velocity_clamp: f64,
    pub execution: Execution,
}

impl Default for PsoConfig {
    fn default() -> Self {
        let range = [1e-8f64.ln(), 1e-1f64.ln()];
        PsoConfig {
            swarm_size: 30,
            max_iters: 2000,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            init_box: vec![range; 3],
            seed: 0,
            velocity_clamp: 0.5,
            execution: Execution::default(),
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.swarm_size == 0 {
            return bad("swarm_size must be at least 1".into());
        }
        for (name, w) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("velocity_clamp", self.velocity_clamp),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {w}"));
            }
        }
        if self.init_box.is_empty() {
            return bad("init_box must have at least one dimension".into());
        }
        for (d, [lo, hi]) in self.init_box.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("init_box[{d}] = [{lo}, {hi}] is not a finite increasing range"));
            }
        }
        Ok(())
    }
}

fn score<F>(f: &F, x: &[f64]) -> f64
where
    F: Fn(&[f64]) -> Result<f64>,
{
    match f(x) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

/// Minimizes `f` over the configured box.
///
/// Velocity update: `v ← w·v + c₁r₁(p − x) + c₂r₂(g − x)` with fresh
/// uniform `r₁, r₂` per dimension. Particles start at rest. Random draws are
/// made sequentially before each batch of evaluations, and bests are reduced
/// in particle order, so the result depends only on the seed.
///
/// Clamping particles onto the box boundary lets a swarm whose best sits on
/// a face collapse there with zero velocity; leaving them unevaluated
/// outside the box pulls them back instead.
pub fn pso_optimize<F>(f: F, cfg: &PsoConfig) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let dims = cfg.init_box.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut positions: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|_| cfg.init_box.iter().map(|[lo, hi]| rng.random_range(*lo..*hi)).collect())
        .collect();
    let mut velocities = vec![vec![0.0; dims]; cfg.swarm_size];
    let vmax: Vec<f64> = cfg
        .init_box
        .iter()
        .map(|[lo, hi]| cfg.velocity_clamp * (hi - lo))
        .collect();

    let costs = par::map_slice(cfg.execution, &positions, |x| score(&f, x));
    if costs.iter().all(|c| !c.is_finite()) {
        return Err(Error::Config(
            "objective is non-finite at every initial particle".into(),
        ));
    }
    let mut personal = positions.clone();
    let mut personal_cost = costs.clone();
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    let mut global = positions[best].clone();
    let mut global_cost = costs[best];
    let mut trace = OptimizationTrace::default();
    trace.push(0, global_cost, &global);

    for it in 1..=cfg.max_iters {
        for (i, (x, v)) in positions.iter_mut().zip(velocities.iter_mut()).enumerate() {
            for d in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let vd = cfg.inertia * v[d]
                    + cfg.cognitive * r1 * (personal[i][d] - x[d])
                    + cfg.social * r2 * (global[d] - x[d]);
                v[d] = vd.clamp(-vmax[d], vmax[d]);
                x[d] += v[d];
            }
        }
        let costs = par::map_slice(cfg.execution, &positions, |x| {
            let inside = x.iter().zip(&cfg.init_box).all(|(v, [lo, hi])| (lo..=hi).contains(&v));
            if inside {
                score(&f, x)
            } else {
                f64::INFINITY
            }
        });
        for (i, c) in costs.into_iter().enumerate() {
            if c < personal_cost[i] {
                personal_cost[i] = c;
                personal[i].clone_from(&positions[i]);
            }
            if c < global_cost {
                global_cost = c;
                global.clone_from(&positions[i]);
            }
        }
        trace.push(it, global_cost, &global);
    }
    Ok((global, trace))
}

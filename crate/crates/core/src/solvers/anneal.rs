//! Simulated annealing with single-bit flips.
//!
//! Two schedules are provided. The custom one cools linearly in temperature
//! and proposes random flips; it works on any [`FlipObjective`] and is used
//! directly on exact CQNS. The geometric one follows the usual QUBO sampler
//! recipe: inverse temperature grows geometrically and each step is a full
//! in-order sweep.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{FlipObjective, SampleRecord, SolverError, SolverKind};
use crate::portfolio::Portfolio;
use crate::{par, seed};

/// Metropolis rule at temperature `t`; never-worse moves always pass.
#[inline]
pub fn metropolis_accept(delta: f64, t: f64, rng: &mut seed::Rng) -> bool {
    if delta <= 0.0 {
        return true;
    }
    if t <= 0.0 || delta == f64::INFINITY {
        return false;
    }
    rng.random::<f64>() < (-delta / t).exp()
}

/// Metropolis rule at inverse temperature `beta`.
#[inline]
pub fn accept_beta(delta: f64, beta: f64, rng: &mut seed::Rng) -> bool {
    if delta <= 0.0 {
        return true;
    }
    if delta == f64::INFINITY {
        return false;
    }
    rng.random::<f64>() < (-beta * delta).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub t_max: f64,
    pub t_min: f64,
    /// Temperature drop per cooling cycle.
    pub cooling_rate: f64,
    /// Flip proposals per cycle.
    pub sweeps: usize,
    pub restarts: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { t_max: 1e-3, t_min: 1e-6, cooling_rate: 1e-5, sweeps: 50, restarts: 8 }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.t_max.is_finite()
            && self.t_min > 0.0
            && self.t_max >= self.t_min
            && self.cooling_rate > 0.0
            && self.cooling_rate.is_finite()
            && self.restarts > 0;
        if ok {
            Ok(())
        } else {
            Err(SolverError::BadConfig(format!(
                "annealing needs t_max >= t_min > 0, cooling_rate > 0 and restarts > 0, got {self:?}"
            )))
        }
    }

    /// Number of cooling cycles, at least one.
    pub fn cycles(&self) -> usize {
        (((self.t_max - self.t_min) / self.cooling_rate).round() as usize).max(1)
    }
}

fn random_start<O: FlipObjective>(obj: &O, rng: &mut seed::Rng) -> O::State {
    let n = obj.n();
    loop {
        let bits: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let st = obj.init(&Portfolio::from_bools(&bits));
        if obj.value(&st).is_finite() {
            return st;
        }
    }
}

fn finish<O: FlipObjective>(obj: &O, best: Portfolio, solver: SolverKind, seed: u64, started: Instant) -> SampleRecord {
    let energy = obj.evaluate(&best);
    let target = obj.target_size().or(Some(best.size()));
    SampleRecord::new(best, energy, target, solver, seed, started.elapsed())
}

/// Linear-cooling annealer; one record per restart holding the best mask seen.
pub fn simulated_anneal_custom<O: FlipObjective>(
    obj: &O,
    cfg: &SaConfig,
    seed: u64,
) -> Result<Vec<SampleRecord>, SolverError> {
    cfg.validate()?;
    let n = obj.n();
    let cycles = cfg.cycles();
    Ok(par::map_range(cfg.restarts, |r| {
        let started = Instant::now();
        let run_seed = seed::derive(seed, &[r as u64]);
        let mut rng = seed::rng(run_seed);
        let mut st = random_start(obj, &mut rng);
        let mut value = obj.value(&st);
        let mut best = (value, obj.mask(&st));
        for c in 0..cycles {
            let t = cfg.t_max - c as f64 * cfg.cooling_rate;
            for _ in 0..cfg.sweeps {
                let i = rng.random_range(0..n);
                let d = obj.delta(&st, i);
                if metropolis_accept(d, t, &mut rng) {
                    obj.flip(&mut st, i);
                    value = obj.value(&st);
                    if value < best.0 {
                        best = (value, obj.mask(&st));
                    }
                }
            }
        }
        finish(obj, best.1, SolverKind::SaCustom, run_seed, started)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoSaConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub sweeps: usize,
    pub reads: usize,
}

impl Default for GeoSaConfig {
    fn default() -> Self {
        Self { beta_min: 1e-6, beta_max: 9.0, sweeps: 200, reads: 200 }
    }
}

impl GeoSaConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.beta_min > 0.0 && self.beta_max >= self.beta_min && self.beta_max.is_finite() && self.reads > 0 {
            Ok(())
        } else {
            Err(SolverError::BadConfig(format!(
                "geometric annealing needs 0 < beta_min <= beta_max and reads > 0, got {self:?}"
            )))
        }
    }

    pub fn beta(&self, step: usize) -> f64 {
        if self.sweeps <= 1 {
            return self.beta_max;
        }
        let f = step as f64 / (self.sweeps - 1) as f64;
        self.beta_min * (self.beta_max / self.beta_min).powf(f)
    }
}

/// Geometric-schedule annealer; one record per read holding its final state.
pub fn simulated_anneal_geometric<O: FlipObjective>(
    obj: &O,
    cfg: &GeoSaConfig,
    seed: u64,
) -> Result<Vec<SampleRecord>, SolverError> {
    cfg.validate()?;
    let n = obj.n();
    Ok(par::map_range(cfg.reads, |r| {
        let started = Instant::now();
        let run_seed = seed::derive(seed, &[r as u64]);
        let mut rng = seed::rng(run_seed);
        let mut st = random_start(obj, &mut rng);
        for s in 0..cfg.sweeps {
            let beta = cfg.beta(s);
            for i in 0..n {
                if accept_beta(obj.delta(&st, i), beta, &mut rng) {
                    obj.flip(&mut st, i);
                }
            }
        }
        finish(obj, obj.mask(&st), SolverKind::SaGeometric, run_seed, started)
    }))
}

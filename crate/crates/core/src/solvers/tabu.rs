//! Tabu search with steepest single-flip moves.
//!
//! A flipped variable stays tabu for `tenure` iterations unless flipping it
//! again would beat the best energy seen in the read. A read ends after `N`
//! consecutive iterations without a new best, or when the optional time cap
//! runs out.

use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{FlipObjective, SampleRecord, SolverError, SolverKind};
use crate::portfolio::Portfolio;
use crate::{par, seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabuConfig {
    pub reads: usize,
    pub tenure: usize,
    pub time_cap: Option<Duration>,
}

impl Default for TabuConfig {
    fn default() -> Self {
        Self { reads: 200, tenure: 50, time_cap: None }
    }
}

/// One iteration of a traced read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabuMove {
    pub iteration: usize,
    /// `None` when every move was tabu and none aspirated.
    pub var: Option<usize>,
    pub was_tabu: bool,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Best energy seen before this move.
    pub best_before: f64,
}

fn read<O: FlipObjective>(
    obj: &O,
    cfg: &TabuConfig,
    rng: &mut seed::Rng,
    mut trace: Option<&mut Vec<TabuMove>>,
) -> Portfolio {
    let n = obj.n();
    let started = Instant::now();
    let bits: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    let mut st = obj.init(&Portfolio::from_bools(&bits));
    let mut value = obj.value(&st);
    let mut best = (value, obj.mask(&st));
    let mut last_flip: Vec<Option<usize>> = vec![None; n];
    let mut stale = 0;
    let mut iteration = 0;
    while stale < n.max(1) {
        if cfg.time_cap.is_some_and(|cap| started.elapsed() >= cap) {
            break;
        }
        iteration += 1;
        let mut pick: Option<(usize, f64, bool)> = None;
        for (i, last) in last_flip.iter().enumerate() {
            let after = value + obj.delta(&st, i);
            let tabu = last.is_some_and(|t| iteration <= t + cfg.tenure);
            if tabu && !(after < best.0) {
                continue;
            }
            if pick.is_none_or(|(_, v, _)| after < v) {
                pick = Some((i, after, tabu));
            }
        }
        let before = value;
        let best_before = best.0;
        if let Some((i, _, _)) = pick {
            obj.flip(&mut st, i);
            last_flip[i] = Some(iteration);
            value = obj.value(&st);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(TabuMove {
                iteration,
                var: pick.map(|p| p.0),
                was_tabu: pick.is_some_and(|p| p.2),
                energy_before: before,
                energy_after: value,
                best_before,
            });
        }
        if value < best.0 {
            best = (value, obj.mask(&st));
            stale = 0;
        } else {
            stale += 1;
        }
    }
    best.1
}

/// Independent reads, each reporting the best mask it visited.
pub fn tabu_search<O: FlipObjective>(obj: &O, cfg: &TabuConfig, seed: u64) -> Result<Vec<SampleRecord>, SolverError> {
    if cfg.reads == 0 || cfg.tenure == 0 {
        return Err(SolverError::BadConfig(format!("tabu search needs reads >= 1 and tenure >= 1, got {cfg:?}")));
    }
    Ok(par::map_range(cfg.reads, |r| {
        let started = Instant::now();
        let run_seed = seed::derive(seed, &[r as u64]);
        let best = read(obj, cfg, &mut seed::rng(run_seed), None);
        let energy = obj.evaluate(&best);
        let target = obj.target_size().or(Some(best.size()));
        SampleRecord::new(best, energy, target, SolverKind::Tabu, run_seed, started.elapsed())
    }))
}

/// A single read with its move history.
pub fn tabu_read_traced<O: FlipObjective>(obj: &O, cfg: &TabuConfig, seed: u64) -> (Portfolio, Vec<TabuMove>) {
    let mut trace = Vec::new();
    let best = read(obj, cfg, &mut seed::rng(seed), Some(&mut trace));
    (best, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{enumerate_all, QuboObjective};
    use nalgebra::DMatrix;

    fn frustrated(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                -0.5 + 0.1 * (i % 3) as f64
            } else {
                0.3 * (((i * 31 + j * 31 + i * j) % 7) as f64 / 7.0 - 0.4)
            }
        })
    }

    #[test]
    fn tabu_moves_only_by_aspiration() {
        let q = frustrated(10);
        let obj = QuboObjective::new(&q, None);
        let cfg = TabuConfig { reads: 1, tenure: 4, time_cap: None };
        for s in 0..20 {
            let (_, trace) = tabu_read_traced(&obj, &cfg, s);
            for mv in &trace {
                if mv.was_tabu {
                    assert!(mv.energy_after < mv.best_before);
                }
            }
        }
    }

    #[test]
    fn reads_reach_ground_state() {
        let q = frustrated(10);
        let obj = QuboObjective::new(&q, None);
        let ground = enumerate_all(&obj, 24).unwrap().best().unwrap().0.min(0.0);
        let recs = tabu_search(&obj, &TabuConfig { reads: 20, tenure: 3, time_cap: None }, 8).unwrap();
        let best = recs.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
        assert!((best - ground).abs() < 1e-12);
    }

    #[test]
    fn seeded_reads_repeat() {
        let q = frustrated(9);
        let obj = QuboObjective::new(&q, Some(4));
        let cfg = TabuConfig { reads: 5, ..TabuConfig::default() };
        let a = tabu_search(&obj, &cfg, 1).unwrap();
        let b = tabu_search(&obj, &cfg, 1).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)));
    }
}

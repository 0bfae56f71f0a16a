//! Fat-tailed random sampling of the CQNS landscape.
//!
//! Phase 1 draws every asset independently with probability 1/2, so sizes
//! pile up around `N/2`. Phase 2 spends the rest of the budget evenly over
//! sizes `1..=N` with uniformly chosen assets, which fills in the tails that
//! phase 1 almost never reaches.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{SampleRecord, SizeStats, SolverError, SolverKind};
use crate::market_data::MarketModel;
use crate::portfolio::Portfolio;
use crate::scoring::Moments;
use crate::{par, seed};

const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub total_samples: usize,
    /// Share of the budget spent on the Bernoulli phase.
    pub phase1_fraction: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { total_samples: 250_000, phase1_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub stats: SizeStats,
    pub best: SampleRecord,
    /// Best sample of each size that was drawn at least once.
    pub per_size_best: Vec<SampleRecord>,
    pub samples: usize,
}

enum Job {
    Bernoulli { count: usize },
    Sized { size: usize, count: usize },
}

fn jobs(n: usize, cfg: &McConfig) -> Vec<Job> {
    let phase1 = (cfg.total_samples as f64 * cfg.phase1_fraction).round() as usize;
    let phase1 = phase1.min(cfg.total_samples);
    let phase2 = cfg.total_samples - phase1;
    let mut out = Vec::new();
    let mut left = phase1;
    while left > 0 {
        let c = left.min(BATCH);
        out.push(Job::Bernoulli { count: c });
        left -= c;
    }
    let (quota, extra) = (phase2 / n, phase2 % n);
    for size in 1..=n {
        let mut left = quota + usize::from(size <= extra);
        while left > 0 {
            let c = left.min(BATCH);
            out.push(Job::Sized { size, count: c });
            left -= c;
        }
    }
    out
}

fn bernoulli_mask(n: usize, rng: &mut seed::Rng) -> Portfolio {
    loop {
        let bits: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        if bits.iter().any(|&b| b) {
            return Portfolio::from_bools(&bits);
        }
    }
}

pub fn monte_carlo_fat_tailed(
    model: &MarketModel,
    alpha: f64,
    cfg: &McConfig,
    seed: u64,
) -> Result<McResult, SolverError> {
    let n = model.n();
    if cfg.total_samples < n {
        return Err(SolverError::Budget { samples: cfg.total_samples, n });
    }
    if !(0.0..=1.0).contains(&cfg.phase1_fraction) {
        return Err(SolverError::BadConfig(format!("phase1_fraction {} outside [0, 1]", cfg.phase1_fraction)));
    }
    let start = std::time::Instant::now();
    let jobs = jobs(n, cfg);
    let parts = par::map_range(jobs.len(), |ji| {
        let mut stats = SizeStats::new(n);
        let (count, size) = match jobs[ji] {
            Job::Bernoulli { count } => (count, None),
            Job::Sized { size, count } => (count, Some(size)),
        };
        let mut rng = seed::rng(seed::derive(seed, &[ji as u64]));
        for _ in 0..count {
            let mask = match size {
                None => bernoulli_mask(n, &mut rng),
                Some(s) => Portfolio::from_indices(n, index::sample(&mut rng, n, s)),
            };
            let m = Moments::of(&mask, model)?;
            stats.record(&mask, m.cqns(alpha));
        }
        Ok::<_, SolverError>(stats)
    });
    let mut stats = SizeStats::new(n);
    for p in parts {
        stats.merge(&p?);
    }
    let elapsed = start.elapsed();
    let record = |mask: &Portfolio, v: f64| {
        SampleRecord::new(mask.clone(), v, Some(mask.size()), SolverKind::MonteCarlo, seed, elapsed)
    };
    let per_size_best: Vec<SampleRecord> =
        stats.bins.iter().filter_map(|b| b.argmin.as_ref().map(|m| record(m, b.min))).collect();
    let (v, m) = stats.best().expect("budget covers at least one sample");
    let best = record(m, v);
    Ok(McResult { stats, best, per_size_best, samples: cfg.total_samples })
}

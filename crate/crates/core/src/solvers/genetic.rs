//! Elitist genetic search over exact CQNS.
//!
//! Each generation keeps the best distinct masks unchanged and refills the
//! population with uniform-crossover children of elite pairs and mutated
//! copies of single elites, in a fixed children-to-mutants ratio. The elite
//! set only ever improves, so the per-generation best is non-increasing.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{SampleRecord, SolverError, SolverKind};
use crate::market_data::MarketModel;
use crate::portfolio::Portfolio;
use crate::scoring::Moments;
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub elites: usize,
    /// `(children, mutants)` share of the refill.
    pub ratio: (usize, usize),
    pub seed_population: Option<Vec<Portfolio>>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { population: 456, generations: 40, elites: 40, ratio: (3, 2), seed_population: None }
    }
}

impl GaConfig {
    pub fn validate(&self, n: usize) -> Result<(), SolverError> {
        if let Some(seeds) = &self.seed_population {
            if seeds.is_empty() {
                return Err(SolverError::EmptySeedPopulation);
            }
            if let Some(bad) = seeds.iter().find(|p| p.n() != n) {
                return Err(SolverError::BadConfig(format!("seed mask {bad} does not cover {n} assets")));
            }
        }
        if self.population < 2 || self.elites == 0 || self.elites > self.population || self.generations == 0 {
            return Err(SolverError::BadConfig(format!(
                "need population >= 2, 1 <= elites <= population and generations >= 1, got {self:?}"
            )));
        }
        if self.ratio.0 + self.ratio.1 == 0 {
            return Err(SolverError::BadConfig("children/mutants ratio is 0:0".into()));
        }
        Ok(())
    }
}

/// `(children, mutants)` filling `population − elites` slots; children round up.
pub fn refill_counts(population: usize, elites: usize, ratio: (usize, usize)) -> (usize, usize) {
    let slots = population - elites;
    let parts = ratio.0 + ratio.1;
    let children = (slots * ratio.0).div_ceil(parts);
    (children, slots - children)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: SampleRecord,
    /// Best CQNS after each generation.
    pub generation_best: Vec<f64>,
    /// Final elite set, best first.
    pub elites: Vec<SampleRecord>,
    pub evaluations: usize,
}

fn fitness(mask: &Portfolio, model: &MarketModel, alpha: f64) -> f64 {
    Moments::of(mask, model).map_or(f64::INFINITY, |m| m.cqns(alpha))
}

fn random_mask(n: usize, rng: &mut seed::Rng) -> Portfolio {
    Portfolio::from_bools(&(0..n).map(|_| rng.random::<bool>()).collect::<Vec<_>>())
}

fn crossover(a: &Portfolio, b: &Portfolio, rng: &mut seed::Rng) -> Portfolio {
    let n = a.n();
    Portfolio::from_indices(n, (0..n).filter(|&i| if rng.random::<bool>() { a.contains(i) } else { b.contains(i) }))
}

/// Flips each bit with probability `1/N`, forcing at least one flip.
fn mutate(p: &Portfolio, rng: &mut seed::Rng) -> Portfolio {
    let n = p.n();
    let mut out = p.clone();
    let mut flipped = false;
    for i in 0..n {
        if rng.random_range(0..n) == 0 {
            out.flip(i);
            flipped = true;
        }
    }
    if !flipped {
        out.flip(rng.random_range(0..n));
    }
    out
}

/// Best `count` distinct masks, ordered by (value, mask).
fn select_elites(pop: Vec<Portfolio>, values: Vec<f64>, count: usize) -> Vec<(Portfolio, f64)> {
    let mut scored: Vec<(Portfolio, f64)> = pop.into_iter().zip(values).collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored.dedup_by(|a, b| a.0 == b.0);
    scored.retain(|(_, v)| v.is_finite());
    scored.truncate(count);
    scored
}

pub fn genetic(model: &MarketModel, alpha: f64, cfg: &GaConfig, seed: u64) -> Result<GaResult, SolverError> {
    let n = model.n();
    cfg.validate(n)?;
    let started = Instant::now();
    let (n_children, n_mutants) = refill_counts(cfg.population, cfg.elites, cfg.ratio);
    let mut rng = seed::rng(seed::derive(seed, &[seed::tag("ga-init")]));

    let mut pop: Vec<Portfolio> = match &cfg.seed_population {
        Some(seeds) => {
            let mut s = seeds.clone();
            if s.len() > cfg.population {
                let values = par::map_slice(&s, |p| fitness(p, model, alpha));
                s = select_elites(s, values, cfg.population).into_iter().map(|(p, _)| p).collect();
            }
            s
        }
        None => Vec::new(),
    };
    while pop.len() < cfg.population {
        pop.push(random_mask(n, &mut rng));
    }

    let mut generation_best = Vec::with_capacity(cfg.generations);
    let mut elites = Vec::new();
    let mut evaluations = 0;
    for g in 0..cfg.generations {
        let values = par::map_slice(&pop, |p| fitness(p, model, alpha));
        evaluations += pop.len();
        elites = select_elites(pop, values, cfg.elites);
        if elites.is_empty() {
            // only empty masks survived; restart from random ones
            elites.push((Portfolio::from_indices(n, [rng.random_range(0..n)]), f64::INFINITY));
        }
        generation_best.push(elites[0].1);
        if g + 1 == cfg.generations {
            break;
        }
        let mut rng = seed::rng(seed::derive(seed, &[g as u64]));
        let mut next: Vec<Portfolio> = elites.iter().map(|(p, _)| p.clone()).collect();
        for _ in 0..n_children {
            let a = &elites[rng.random_range(0..elites.len())].0;
            let b = &elites[rng.random_range(0..elites.len())].0;
            next.push(crossover(a, b, &mut rng));
        }
        for _ in 0..n_mutants {
            let a = &elites[rng.random_range(0..elites.len())].0;
            next.push(mutate(a, &mut rng));
        }
        while next.len() < cfg.population {
            next.push(random_mask(n, &mut rng));
        }
        pop = next;
    }

    let elapsed = started.elapsed();
    let elites: Vec<SampleRecord> = elites
        .into_iter()
        .filter(|(p, _)| !p.is_empty())
        .map(|(p, _)| {
            let v = fitness(&p, model, alpha);
            let size = p.size();
            SampleRecord::new(p, v, Some(size), SolverKind::Genetic, seed, elapsed)
        })
        .collect();
    let best = elites[0].clone();
    Ok(GaResult { best, generation_best, elites, evaluations })
}

//! Classical search over portfolio masks.
//!
//! Two families of solvers share one output type, [`SampleRecord`]:
//!
//! - unconstrained searches over the exact CQNS landscape
//!   ([`exhaustive_best`], [`monte_carlo_fat_tailed`], [`genetic`] and
//!   [`simulated_anneal_custom`] with a [`CqnsObjective`]); their records are
//!   stamped with their own size, so they are always valid;
//! - per-size QUBO samplers ([`simulated_anneal_geometric`], [`tabu_search`])
//!   whose records are valid only when the returned popcount hits the QUBO's
//!   target size.
//!
//! Every solver is deterministic given its seed. Independent restarts,
//! reads and sample batches draw from generators derived with
//! [`crate::seed::derive`] and run through [`crate::par`].

mod anneal;
mod exhaustive;
mod genetic;
mod monte_carlo;
mod objective;
mod tabu;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::portfolio::Portfolio;
use crate::scoring::ScoringError;

pub use anneal::{
    accept_beta, metropolis_accept, simulated_anneal_custom, simulated_anneal_geometric, GeoSaConfig, SaConfig,
};
pub use exhaustive::{
    enumerate_all, enumerate_size, exhaustive_best, exhaustive_best_of_size, Candidate, ExhaustiveBest,
    DEFAULT_N_LIMIT, MAX_SIZE_ENUMERATION,
};
pub use genetic::{genetic, refill_counts, GaConfig, GaResult};
pub use monte_carlo::{monte_carlo_fat_tailed, McConfig, McResult};
pub use objective::{CqnsObjective, CqnsState, FlipObjective, QuboObjective, QuboState};
pub use tabu::{tabu_read_traced, tabu_search, TabuConfig, TabuMove};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("{n} assets exceed the enumeration limit of {limit}")]
    TooLarge { n: usize, limit: u128 },
    #[error("seed population was provided but is empty")]
    EmptySeedPopulation,
    #[error("sample budget {samples} is below the asset count {n}")]
    Budget { samples: usize, n: usize },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exhaustive,
    MonteCarlo,
    Genetic,
    SaCustom,
    SaGeometric,
    Tabu,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Exhaustive,
        SolverKind::MonteCarlo,
        SolverKind::Genetic,
        SolverKind::SaCustom,
        SolverKind::SaGeometric,
        SolverKind::Tabu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Exhaustive => "exhaustive",
            SolverKind::MonteCarlo => "monte_carlo",
            SolverKind::Genetic => "genetic",
            SolverKind::SaCustom => "sa_custom",
            SolverKind::SaGeometric => "sa_geometric",
            SolverKind::Tabu => "tabu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Samplers that run once per target size against a QUBO.
    pub fn is_qubo_based(self) -> bool {
        matches!(self, SolverKind::SaGeometric | SolverKind::Tabu)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub mask: Portfolio,
    /// QUBO energy for QUBO samplers, exact CQNS otherwise.
    pub energy: f64,
    pub target_size: Option<usize>,
    pub valid: bool,
    pub solver: SolverKind,
    pub seed: u64,
    pub elapsed: Duration,
}

impl SampleRecord {
    pub fn new(
        mask: Portfolio,
        energy: f64,
        target_size: Option<usize>,
        solver: SolverKind,
        seed: u64,
        elapsed: Duration,
    ) -> Self {
        let valid = target_size.is_some_and(|k| mask.size() == k);
        Self { mask, energy, target_size, valid, solver, seed, elapsed }
    }

    pub fn size(&self) -> usize {
        self.mask.size()
    }

    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self.energy.to_bits() == other.energy.to_bits()
            && self.target_size == other.target_size
            && self.valid == other.valid
            && self.solver == other.solver
            && self.seed == other.seed
    }
}

/// Running min / mean / max of CQNS for one portfolio size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBin {
    pub count: u64,
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_is_pos_inf")]
    pub min: f64,
    #[serde(serialize_with = "finite_or_null", deserialize_with = "null_is_neg_inf")]
    pub max: f64,
    pub sum: f64,
    /// Mask attaining `min`; ties go to the smaller mask.
    pub argmin: Option<Portfolio>,
}

// empty bins hold ±inf, which JSON has no literal for
fn finite_or_null<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    x.is_finite().then_some(*x).serialize(s)
}

fn null_is_pos_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn null_is_neg_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

impl Default for SizeBin {
    fn default() -> Self {
        Self { count: 0, min: f64::INFINITY, max: f64::NEG_INFINITY, sum: 0.0, argmin: None }
    }
}

impl SizeBin {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    fn better(value: f64, mask: &Portfolio, than: f64, than_mask: Option<&Portfolio>) -> bool {
        value < than || (value == than && than_mask.is_none_or(|m| mask < m))
    }

    pub fn push(&mut self, value: f64, mask: &Portfolio) {
        self.push_with(value, || mask.clone());
    }

    /// Like [`push`](Self::push) but only materialises the mask when it
    /// could become the new minimum.
    pub fn push_with(&mut self, value: f64, mask: impl FnOnce() -> Portfolio) {
        self.count += 1;
        self.sum += value;
        self.max = self.max.max(value);
        if value <= self.min {
            let mask = mask();
            if Self::better(value, &mask, self.min, self.argmin.as_ref()) {
                self.min = value;
                self.argmin = Some(mask);
            }
        }
    }

    pub fn merge(&mut self, other: &SizeBin) {
        if other.count == 0 {
            return;
        }
        self.count += other.count;
        self.sum += other.sum;
        self.max = self.max.max(other.max);
        if let Some(m) = &other.argmin {
            if Self::better(other.min, m, self.min, self.argmin.as_ref()) {
                self.min = other.min;
                self.argmin = Some(m.clone());
            }
        }
    }
}

/// Per-size landscape statistics, indexed by popcount `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub bins: Vec<SizeBin>,
}

impl SizeStats {
    pub fn new(n: usize) -> Self {
        Self { bins: vec![SizeBin::default(); n + 1] }
    }

    pub fn n(&self) -> usize {
        self.bins.len() - 1
    }

    pub fn record(&mut self, mask: &Portfolio, value: f64) {
        self.bins[mask.size()].push(value, mask);
    }

    pub fn merge(&mut self, other: &SizeStats) {
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.merge(b);
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Lowest value over all sizes with its mask.
    pub fn best(&self) -> Option<(f64, &Portfolio)> {
        let mut best: Option<(f64, &Portfolio)> = None;
        for b in &self.bins {
            if let Some(m) = &b.argmin {
                if best.is_none_or(|(v, bm)| SizeBin::better(b.min, m, v, Some(bm))) {
                    best = Some((b.min, m));
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validity_follows_target() {
        let p = Portfolio::from_indices(4, [0, 1]);
        assert!(SampleRecord::new(p.clone(), 0.0, Some(2), SolverKind::Tabu, 0, Duration::ZERO).valid);
        assert!(!SampleRecord::new(p.clone(), 0.0, Some(3), SolverKind::Tabu, 0, Duration::ZERO).valid);
        assert!(!SampleRecord::new(p, 0.0, None, SolverKind::Tabu, 0, Duration::ZERO).valid);
    }

    #[test]
    fn size_stats_track_min_mean_max() {
        let mut s = SizeStats::new(3);
        let a = Portfolio::from_indices(3, [0]);
        let b = Portfolio::from_indices(3, [1]);
        s.record(&a, 2.0);
        s.record(&b, -1.0);
        s.record(&a, 5.0);
        let bin = &s.bins[1];
        assert_eq!((bin.count, bin.min, bin.max), (3, -1.0, 5.0));
        assert_eq!(bin.mean(), Some(2.0));
        assert_eq!(bin.argmin.as_ref(), Some(&b));
        assert_eq!(s.total(), 3);
        assert!(bin.min <= bin.mean().unwrap() && bin.mean().unwrap() <= bin.max);
    }

    #[test]
    fn empty_bins_survive_json() {
        let mut s = SizeStats::new(3);
        s.record(&Portfolio::from_indices(3, [2]), -0.5);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("null"));
        let back: SizeStats = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.bins[2].min, f64::INFINITY);
    }

    #[test]
    fn merge_matches_sequential_recording() {
        let masks: Vec<Portfolio> = (1..8u64).map(|b| Portfolio::from_u64(3, b)).collect();
        let mut all = SizeStats::new(3);
        let (mut left, mut right) = (SizeStats::new(3), SizeStats::new(3));
        for (i, m) in masks.iter().enumerate() {
            let v = (i as f64 * 0.7).sin();
            all.record(m, v);
            if i % 2 == 0 {
                left.record(m, v)
            } else {
                right.record(m, v)
            }
        }
        left.merge(&right);
        for (a, b) in all.bins.iter().zip(&left.bins) {
            assert_eq!((a.count, a.min, a.max, &a.argmin), (b.count, b.min, b.max, &b.argmin));
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(SolverKind::parse(k.name()), Some(k));
        }
    }
}

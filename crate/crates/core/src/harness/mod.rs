//! Multi-solver campaigns and their reports.
//!
//! [`run_campaign`] runs every configured solver as an independent task,
//! keyed by [`TaskId`], and collects the outputs in a
//! [`CampaignAccumulator`]. The report writers turn an accumulator into
//! CSV, JSON and SVG files whose numbers are all recomputed from masks.

mod accumulator;
mod campaign;
mod report;
mod svg;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::MarketDataError;
use crate::qubo::{QuboError, QuboSpec, ShiftConfig, DEFAULT_ETA};
use crate::scoring::{ScoreParams, ScoringError, DEFAULT_ALPHA};
use crate::solvers::{GaConfig, GeoSaConfig, McConfig, SaConfig, SolverError, SolverKind, TabuConfig, DEFAULT_N_LIMIT};

pub use accumulator::{CampaignAccumulator, SolverSummary, TaskId, TaskOutput};
pub use campaign::{campaign_qubos, run_campaign, run_campaign_with, validity_filter, Filtered};
pub use report::{
    comparison_rows, comparison_table, export_campaign_qubos, frontier_report, frontier_rows, read_frontier_csv,
    summary_json, ComparisonRow, FrontierRow,
};
pub use svg::frontier_svg;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error("accumulator holds no valid portfolios")]
    EmptyAccumulator,
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Market(#[from] MarketDataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Objective minimised by the linear-cooling annealer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SaObjective {
    /// Exact CQNS over all sizes, run once.
    #[default]
    Cqns,
    /// Scaled QUBO energy, run once per target size.
    Qubo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    Exhaustive { n_limit: usize },
    MonteCarlo(McConfig),
    Genetic(GaConfig),
    SaCustom { config: SaConfig, objective: SaObjective },
    SaGeometric(GeoSaConfig),
    Tabu(TabuConfig),
}

impl SolverSpec {
    pub fn kind(&self) -> SolverKind {
        match self {
            SolverSpec::Exhaustive { .. } => SolverKind::Exhaustive,
            SolverSpec::MonteCarlo(_) => SolverKind::MonteCarlo,
            SolverSpec::Genetic(_) => SolverKind::Genetic,
            SolverSpec::SaCustom { .. } => SolverKind::SaCustom,
            SolverSpec::SaGeometric(_) => SolverKind::SaGeometric,
            SolverSpec::Tabu(_) => SolverKind::Tabu,
        }
    }

    /// The default configuration for a solver.
    pub fn default_for(kind: SolverKind) -> Self {
        match kind {
            SolverKind::Exhaustive => SolverSpec::Exhaustive { n_limit: DEFAULT_N_LIMIT },
            SolverKind::MonteCarlo => SolverSpec::MonteCarlo(McConfig::default()),
            SolverKind::Genetic => SolverSpec::Genetic(GaConfig::default()),
            SolverKind::SaCustom => SolverSpec::SaCustom { config: SaConfig::default(), objective: SaObjective::Cqns },
            SolverKind::SaGeometric => SolverSpec::SaGeometric(GeoSaConfig::default()),
            SolverKind::Tabu => SolverSpec::Tabu(TabuConfig::default()),
        }
    }

    /// Runs once per target size against that size's QUBO.
    pub fn is_per_size(&self) -> bool {
        matches!(
            self,
            SolverSpec::SaGeometric(_)
                | SolverSpec::Tabu(_)
                | SolverSpec::SaCustom { objective: SaObjective::Qubo, .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Inclusive target sizes; `None` means `[2, N − 1]`.
    pub size_range: Option<(usize, usize)>,
    pub solvers: Vec<SolverSpec>,
    pub alpha: f64,
    pub sharpe_excess: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Extra graduated re-tuning rounds per (solver, size) after the first.
    pub tuning_rounds: usize,
    pub eta: f64,
    pub qubo: QuboSpec,
    pub shift: ShiftConfig,
    /// Record wall-clock times; off makes every output reproducible byte for byte.
    pub timing: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            size_range: None,
            solvers: Vec::new(),
            alpha: DEFAULT_ALPHA,
            sharpe_excess: true,
            seed: 0,
            output_dir: PathBuf::from("out"),
            tuning_rounds: 0,
            eta: DEFAULT_ETA,
            qubo: QuboSpec::default(),
            shift: ShiftConfig::default(),
            timing: true,
        }
    }
}

impl CampaignConfig {
    pub fn score_params(&self) -> ScoreParams {
        ScoreParams { alpha: self.alpha, sharpe_excess: self.sharpe_excess }
    }

    /// The checked size range for an `n`-asset universe.
    pub fn resolved_range(&self, n: usize) -> Result<(usize, usize), HarnessError> {
        let (lo, hi) = self.size_range.unwrap_or((2, n.saturating_sub(1)));
        if lo < 2 || lo > hi || hi + 1 > n {
            return Err(QuboError::BadSize {
                k: if lo < 2 || lo > hi { lo } else { hi },
                min: 2,
                max: n.saturating_sub(1),
            }
            .into());
        }
        Ok((lo, hi))
    }

    pub fn validate(&self, n: usize) -> Result<(), HarnessError> {
        self.resolved_range(n)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ScoringError::BadAlpha(self.alpha).into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(HarnessError::Config(format!("eta must be a non-negative number, got {}", self.eta)));
        }
        Ok(())
    }
}

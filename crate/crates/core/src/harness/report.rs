use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CampaignAccumulator, CampaignConfig, HarnessError};
use crate::market_data::MarketModel;
use crate::numfmt::{f17, to_json_f17};
use crate::portfolio::Portfolio;
use crate::qubo::{export_qubo, BigMatrix, QuboExportMeta, Weighting};
use crate::scoring::ScoredPortfolio;

/// One valid portfolio with every figure recomputed from its mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub mask: String,
    pub size: usize,
    pub expected_return: f64,
    pub stdev: f64,
    pub sharpe: f64,
    pub cqr: f64,
    pub cqns: f64,
    pub solver: String,
}

impl FrontierRow {
    fn fields(&self) -> [String; 8] {
        [
            self.mask.clone(),
            self.size.to_string(),
            f17(self.expected_return),
            f17(self.stdev),
            f17(self.sharpe),
            f17(self.cqr),
            f17(self.cqns),
            self.solver.clone(),
        ]
    }
}

const FRONTIER_HEADER: [&str; 8] = ["mask", "size", "expected_return", "stdev", "sharpe", "cqr", "cqns", "solver"];

/// Rows for the deduplicated valid records; masks the scorer rejects
/// (zero variance) are skipped with a warning.
pub fn frontier_rows(acc: &CampaignAccumulator, model: &MarketModel, cfg: &CampaignConfig) -> Vec<FrontierRow> {
    let params = cfg.score_params();
    acc.records()
        .into_iter()
        .filter_map(|r| match ScoredPortfolio::score(&r.mask, model, &params) {
            Ok(s) => Some(FrontierRow {
                mask: r.mask.to_bit_string(),
                size: s.size(),
                expected_return: s.expected_return,
                stdev: s.stdev,
                sharpe: s.sharpe,
                cqr: s.cqr,
                cqns: s.cqns,
                solver: r.solver.name().to_string(),
            }),
            Err(e) => {
                log::warn!("skipping {} from {}: {e}", r.mask, r.solver);
                None
            }
        })
        .collect()
}

pub fn read_frontier_csv(path: impl AsRef<Path>) -> Result<Vec<FrontierRow>, HarnessError> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

fn opt_f17(x: Option<f64>) -> String {
    x.map(f17).unwrap_or_default()
}

fn write_frontier_csv(rows: &[FrontierRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FRONTIER_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

fn write_size_stats_csv(acc: &CampaignAccumulator, path: &Path) -> Result<(), HarnessError> {
    let stats = acc.size_stats();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["size", "count", "min", "mean", "max", "argmin"])?;
    for (m, b) in stats.bins.iter().enumerate().skip(1) {
        let has = b.count > 0;
        w.write_record([
            m.to_string(),
            b.count.to_string(),
            opt_f17(has.then_some(b.min)),
            opt_f17(b.mean()),
            opt_f17(has.then_some(b.max)),
            b.argmin.as_ref().map(Portfolio::to_bit_string).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_size_deviation_csv(acc: &CampaignAccumulator, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["solver", "target_size", "round", "returned_size", "count", "valid"])?;
    for (id, t) in &acc.tasks {
        let Some(k) = id.k else { continue };
        for (m, c) in &t.size_counts {
            w.write_record([
                id.solver.name().to_string(),
                k.to_string(),
                id.round.to_string(),
                m.to_string(),
                c.to_string(),
                (*m == k).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Campaign metadata plus the best portfolio per solver.
pub fn summary_json(acc: &CampaignAccumulator, model: &MarketModel, cfg: &CampaignConfig) -> Value {
    let params = cfg.score_params();
    let solvers: Vec<Value> = acc
        .solver_summaries(model, cfg.alpha)
        .into_iter()
        .map(|s| {
            let best = s.best.as_ref().and_then(|(m, _)| ScoredPortfolio::score(m, model, &params).ok());
            json!({
                "solver": s.solver.name(),
                "samples": s.samples,
                "valid": s.valid,
                "duplicates": s.duplicates,
                "best": best.map(|b| json!({
                    "mask": b.portfolio.to_bit_string(),
                    "size": b.size(),
                    "expected_return": b.expected_return,
                    "stdev": b.stdev,
                    "sharpe": b.sharpe,
                    "cqr": b.cqr,
                    "cqns": b.cqns,
                })),
            })
        })
        .collect();
    let errors: Vec<Value> = acc
        .errors()
        .into_iter()
        .map(|(id, e)| json!({"solver": id.solver.name(), "k": id.k, "round": id.round, "message": e}))
        .collect();
    let divisor = match cfg.qubo.weighting {
        Weighting::PerSize => "per_size",
        Weighting::Unweighted => "unweighted",
    };
    json!({
        "n": model.n(),
        "tickers": model.tickers,
        "model_hash": model.content_hash(),
        "seed": cfg.seed,
        "alpha": cfg.alpha,
        "risk_free": model.risk_free,
        "market_return": model.market_return,
        "return_definition": "capm_annual",
        "daily_returns": "simple",
        "covariance_divisor": "observations_minus_one",
        "sharpe_convention": if cfg.sharpe_excess { "excess_annual_return_over_daily_stdev" } else { "annual_return_over_daily_stdev" },
        "qubo_divisor": divisor,
        "qubo_linear_coefficient": cfg.qubo.lin_coeff,
        "size_range": cfg.size_range,
        "tuning_rounds": cfg.tuning_rounds,
        "valid_portfolios": acc.records().len(),
        "solvers": solvers,
        "errors": errors,
    })
}

/// Writes `frontier.csv`, `size_stats.csv`, `size_deviation.csv`,
/// `frontier.svg` and `summary.json` into `out_dir`.
pub fn frontier_report(
    acc: &CampaignAccumulator,
    model: &MarketModel,
    cfg: &CampaignConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    if acc.is_empty() {
        return Err(HarnessError::EmptyAccumulator);
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let rows = frontier_rows(acc, model, cfg);
    let paths: Vec<PathBuf> = ["frontier.csv", "size_stats.csv", "size_deviation.csv", "frontier.svg", "summary.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_frontier_csv(&rows, &paths[0])?;
    write_size_stats_csv(acc, &paths[1])?;
    write_size_deviation_csv(acc, &paths[2])?;
    fs::write(&paths[3], super::frontier_svg(&rows))?;
    fs::write(&paths[4], to_json_f17(&summary_json(acc, model, cfg))?)?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub solver: String,
    pub samples: u64,
    pub valid: u64,
    pub best_cqns: Option<f64>,
    pub best_mask: Option<Portfolio>,
    /// `None` when no oracle is available.
    pub found_ideal: Option<bool>,
    pub elapsed_ms: Option<f64>,
}

pub fn comparison_rows(
    acc: &CampaignAccumulator,
    model: &MarketModel,
    cfg: &CampaignConfig,
    oracle_best: Option<&Portfolio>,
) -> Vec<ComparisonRow> {
    acc.solver_summaries(model, cfg.alpha)
        .into_iter()
        .map(|s| ComparisonRow {
            solver: s.solver.name().to_string(),
            samples: s.samples,
            valid: s.valid,
            best_cqns: s.best.as_ref().map(|b| b.1),
            found_ideal: oracle_best.map(|o| s.best.as_ref().is_some_and(|b| &b.0 == o)),
            best_mask: s.best.map(|b| b.0),
            elapsed_ms: cfg.timing.then_some(s.elapsed.as_secs_f64() * 1e3),
        })
        .collect()
}

/// Writes `comparison.csv`; returns its path.
pub fn comparison_table(
    acc: &CampaignAccumulator,
    model: &MarketModel,
    cfg: &CampaignConfig,
    oracle_best: Option<&Portfolio>,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf, HarnessError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let path = dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["solver", "samples", "valid", "best_cqns", "best_mask", "found_ideal", "elapsed_ms"])?;
    for r in comparison_rows(acc, model, cfg, oracle_best) {
        w.write_record([
            r.solver,
            r.samples.to_string(),
            r.valid.to_string(),
            opt_f17(r.best_cqns),
            r.best_mask.as_ref().map(Portfolio::to_bit_string).unwrap_or_default(),
            r.found_ideal.map(|b| b.to_string()).unwrap_or_default(),
            opt_f17(r.elapsed_ms),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// Writes `qubo_k<k>.json` for every size in `qubos`.
pub fn export_campaign_qubos(
    qubos: &BigMatrix,
    model: &MarketModel,
    cfg: &CampaignConfig,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let hash = model.content_hash();
    let mut paths = Vec::new();
    for (k, q) in &qubos.qubos {
        let path = dir.join(format!("qubo_k{k}.json"));
        export_qubo(&q.scaled, QuboExportMeta { seed: cfg.seed, model_hash: hash.clone() }, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

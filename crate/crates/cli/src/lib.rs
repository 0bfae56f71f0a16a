//! The `cqns` command-line tool.
//!
//! [`run`] parses arguments, layers the configuration and dispatches to a
//! subcommand. Exit status is `0` on success, `1` when the data or a solver
//! fails and `2` for usage errors, including target sizes outside the
//! universe.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cqns_core::harness::{
    campaign_qubos, comparison_table, export_campaign_qubos, frontier_report, run_campaign, run_campaign_with,
    CampaignAccumulator, CampaignConfig, HarnessError, SolverSpec,
};
use cqns_core::market_data::load_prices;
use cqns_core::numfmt::{f17, to_json_f17};
use cqns_core::qubo::{export_qubo, to_ising, BigMatrix, QuboError, QuboExportMeta};
use cqns_core::solvers::{exhaustive_best, SolverKind};
use cqns_core::{par, seed, AssetUniverse, MarketModel, Portfolio, ScoredPortfolio};

use config::{Overrides, Resolved};

/// Environment variable capping the worker pool; `0` or unset means one
/// thread per core.
pub const THREADS_ENV: &str = "CQNS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<QuboError> for CliError {
    fn from(e: QuboError) -> Self {
        match e {
            QuboError::BadSize { .. } => CliError::Usage(format!("qubo: {e}")),
            _ => CliError::Domain(format!("qubo: {e}")),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Qubo(q) => q.into(),
            HarnessError::Config(_) => CliError::Usage(format!("harness: {e}")),
            HarnessError::Scoring(_) => CliError::Domain(format!("scoring: {e}")),
            HarnessError::Solver(_) => CliError::Domain(format!("solvers: {e}")),
            HarnessError::Market(_) => CliError::Domain(format!("market_data: {e}")),
            _ => CliError::Domain(format!("harness: {e}")),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Domain(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "cqns",
    version,
    about = "Portfolio selection with the CQNS score, QUBO builders and solver campaigns"
)]
struct Cli {
    /// JSON file of flat dotted keys, e.g. {"ga.population": 100}
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable. The value is read as JSON, or as text if that fails.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed; overrides the `seed` key
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Long-format date,ticker,close price CSV; overrides the `data` key
    #[arg(long, global = true, value_name = "CSV")]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load prices and print the market model
    Ingest {
        /// Also write the model as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one portfolio
    Score {
        /// Bit string such as 0110, or comma-separated tickers
        #[arg(long)]
        mask: String,
    },
    /// Build the scaled QUBO for one target size and print its summary
    BuildQubo {
        #[arg(long)]
        k: usize,
        /// Also export it as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single solver
    Solve {
        #[arg(long)]
        solver: String,
        /// Target size, required by the per-size solvers
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run every configured solver and write all reports to `output_dir`
    Campaign,
    /// Re-render reports from a saved campaign.json
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Directory for the reports; defaults to `output_dir`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write qubo_k<k>.json files for one size or the whole size range
    ExportQubo {
        #[arg(long)]
        k: Option<usize>,
        /// Directory for the files; defaults to `output_dir`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved configuration
    ShowConfig,
}

/// Runs the tool with `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if let Some(threads) = threads_from_env()? {
        if !par::set_global_threads(threads) {
            log::debug!("worker pool already running; {THREADS_ENV} ignored");
        }
    }
    let ov = Overrides { sets: cli.sets, seed: cli.seed, data: cli.data };
    let cfg = Resolved::resolve(cli.config.as_deref(), &ov)?;
    let resolved = serde_json::to_string(&cfg.to_json()).expect("json values serialize");
    let _ = writeln!(err, "seed {}", cfg.seed());
    let _ = writeln!(err, "config {resolved}");

    let w = |r: std::io::Result<()>| r.map_err(|e| CliError::Domain(format!("writing output: {e}")));
    match cli.command {
        Command::ShowConfig => {
            let pretty = serde_json::to_string_pretty(&cfg.to_json()).expect("json values serialize");
            w(writeln!(out, "{pretty}"))
        }
        Command::Ingest { out: path } => ingest(&cfg, path.as_deref(), out),
        Command::Score { mask } => score(&cfg, &mask, out),
        Command::BuildQubo { k, out: path } => build_qubo(&cfg, k, path.as_deref(), out),
        Command::Solve { solver, k } => solve(&cfg, &solver, k, out),
        Command::Campaign => campaign(&cfg, out),
        Command::Report { input, out: dir } => report(&cfg, &input, dir, out),
        Command::ExportQubo { k, out: dir } => export(&cfg, k, dir, out),
    }
}

fn load_universe(cfg: &Resolved) -> Result<AssetUniverse, CliError> {
    let path = cfg.data().ok_or_else(|| CliError::Usage("no price file: pass --data or set `data`".into()))?;
    load_prices(&path, cfg.market_ticker()).map_err(|e| CliError::Domain(format!("market_data: {e}")))
}

fn model_of(universe: &AssetUniverse, cfg: &Resolved) -> Result<MarketModel, CliError> {
    MarketModel::from_universe(universe, &cfg.model_params()).map_err(|e| CliError::Domain(format!("market_data: {e}")))
}

fn load_model(cfg: &Resolved) -> Result<MarketModel, CliError> {
    model_of(&load_universe(cfg)?, cfg)
}

/// Accepts a `0`/`1` string of length `N` (optionally `0b`-prefixed) or a
/// comma-separated ticker list.
pub fn parse_mask(s: &str, model: &MarketModel) -> Result<Portfolio, CliError> {
    let body = s.trim();
    let digits = body.strip_prefix("0b").unwrap_or(body);
    let looks_binary = !digits.is_empty() && digits.chars().all(|c| c == '0' || c == '1');
    let parsed = if looks_binary && !model.tickers.iter().any(|t| t == body) {
        Portfolio::parse_bits(body, model.n())
    } else {
        Portfolio::parse_tickers(body, &model.tickers)
    };
    parsed.map_err(|e| CliError::Usage(format!("bad mask {s:?}: {e}")))
}

macro_rules! out {
    ($dst:expr, $($arg:tt)*) => {
        writeln!($dst, $($arg)*).map_err(|e| CliError::Domain(format!("writing output: {e}")))?
    };
}

fn ingest(cfg: &Resolved, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let universe = load_universe(cfg)?;
    let model = model_of(&universe, cfg)?;
    let (bmin, bmax) =
        model.betas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &b| (lo.min(b), hi.max(b)));
    out!(out, "assets {}", model.n());
    out!(out, "trading_days {}", universe.t());
    out!(out, "as_of {}", universe.as_of);
    out!(out, "market_ticker {}", cfg.market_ticker());
    out!(out, "market_return {}", f17(model.market_return));
    out!(out, "risk_free {}", f17(model.risk_free));
    out!(out, "market_var {}", f17(model.market_var));
    out!(out, "beta_min {}", f17(bmin));
    out!(out, "beta_max {}", f17(bmax));
    out!(out, "min_cov_eigenvalue {}", f17(model.min_cov_eigenvalue()));
    out!(out, "model_hash {}", model.content_hash());
    out!(out, "tickers {}", model.tickers.join(","));
    if let Some(path) = path {
        write_json(path, &model)?;
        out!(out, "wrote {}", path.display());
    }
    Ok(())
}

fn score(cfg: &Resolved, mask: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let p = parse_mask(mask, &model)?;
    let s = ScoredPortfolio::score(&p, &model, &cfg.campaign().score_params())
        .map_err(|e| CliError::Domain(format!("scoring: {e}")))?;
    out!(out, "mask {}", p.to_bit_string());
    out!(out, "size {}", p.size());
    out!(out, "expected_return {}", f17(s.expected_return));
    out!(out, "variance {}", f17(s.variance));
    out!(out, "stdev {}", f17(s.stdev));
    out!(out, "cqns {}", f17(s.cqns));
    out!(out, "cqr {}", f17(s.cqr));
    out!(out, "sharpe {}", f17(s.sharpe));
    Ok(())
}

fn qubo_seed(c: &CampaignConfig) -> u64 {
    seed::derive(c.seed, &[seed::tag("qubo")])
}

fn build_qubo(cfg: &Resolved, k: usize, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let c = cfg.campaign();
    let big = BigMatrix::build(&model, k..=k, &c.qubo, &c.shift, qubo_seed(&c))?;
    let q = &big.qubos[&k];
    let s = &q.scaled.shift;
    out!(out, "k {k}");
    out!(out, "n {}", model.n());
    out!(out, "scale {}", f17(q.scaled.scale));
    out!(out, "shift_lin {}", f17(s.lin));
    out!(out, "shift_quad {}", f17(s.quad));
    out!(out, "end_energy {}", f17(s.end_energy));
    out!(out, "full_energy {}", f17(s.full_energy));
    out!(out, "max_abs_entry {}", f17(q.scaled.max_abs_entry()));
    out!(out, "quadratic_to_linear_ratio {}", f17(q.raw.quadratic_to_linear_ratio()));
    match to_ising(&q.scaled) {
        Ok(_) => out!(out, "ising_ranges ok"),
        Err(v) => out!(out, "ising_ranges {v}"),
    }
    if let Some(path) = path {
        export_qubo(&q.scaled, QuboExportMeta { seed: c.seed, model_hash: model.content_hash() }, path)?;
        out!(out, "wrote {}", path.display());
    }
    Ok(())
}

fn solve(cfg: &Resolved, name: &str, k: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let kind = SolverKind::parse(name).ok_or_else(|| {
        let known: Vec<&str> = SolverKind::ALL.iter().map(|k| k.name()).collect();
        CliError::Usage(format!("unknown solver {name:?}; expected one of {}", known.join(", ")))
    })?;
    let spec = cfg.solver_spec(kind);
    let per_size = spec.is_per_size();
    match (per_size, k) {
        (true, None) => return Err(CliError::Usage(format!("{name} needs a target size: pass --k"))),
        (false, Some(_)) => return Err(CliError::Usage(format!("{name} searches every size; drop --k"))),
        _ => {}
    }
    let model = load_model(cfg)?;
    let c = CampaignConfig { solvers: vec![spec], size_range: k.map(|k| (k, k)), ..cfg.campaign() };
    let acc = run_campaign(&c, &model)?;
    if let Some((id, msg)) = acc.errors().first() {
        return Err(CliError::Domain(format!("solvers: {} failed: {msg}", id.solver.name())));
    }
    let summary = &acc.solver_summaries(&model, c.alpha)[0];
    out!(out, "solver {}", kind.name());
    if let Some(k) = k {
        out!(out, "k {k}");
    }
    out!(out, "samples {}", summary.samples);
    out!(out, "valid {}", summary.valid);
    out!(out, "duplicates {}", summary.duplicates);
    match &summary.best {
        Some((mask, value)) => {
            out!(out, "best_mask {}", mask.to_bit_string());
            out!(out, "best_size {}", mask.size());
            out!(out, "best_cqns {}", f17(*value));
        }
        None => out!(out, "best_mask none"),
    }
    Ok(())
}

fn oracle_mask(model: &MarketModel, c: &CampaignConfig, n_limit: usize) -> Result<Option<Portfolio>, CliError> {
    if model.n() > n_limit {
        return Ok(None);
    }
    let best = exhaustive_best(model, c.alpha, n_limit).map_err(|e| CliError::Domain(format!("solvers: {e}")))?;
    Ok(Some(best.overall.mask))
}

fn n_limit(cfg: &Resolved) -> usize {
    match cfg.solver_spec(SolverKind::Exhaustive) {
        SolverSpec::Exhaustive { n_limit } => n_limit,
        _ => unreachable!("exhaustive spec"),
    }
}

fn write_reports(
    acc: &CampaignAccumulator,
    model: &MarketModel,
    c: &CampaignConfig,
    oracle: Option<&Portfolio>,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    if acc.is_empty() {
        log::warn!("no valid portfolios; frontier reports skipped");
    } else {
        paths.extend(frontier_report(acc, model, c, dir)?);
    }
    paths.push(comparison_table(acc, model, c, oracle, dir)?);
    Ok(paths)
}

fn campaign(cfg: &Resolved, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let c = cfg.campaign();
    let qubos = campaign_qubos(&c, &model)?;
    let acc = run_campaign_with(&c, &model, qubos.as_ref())?;
    let dir = c.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;

    let paths_json =
        [write_json(&dir.join("config.json"), &cfg.to_json())?, write_json(&dir.join("campaign.json"), &acc)?];
    let mut paths = paths_json.to_vec();
    if let Some(big) = &qubos {
        paths.extend(export_campaign_qubos(big, &model, &c, &dir)?);
    }
    let oracle = oracle_mask(&model, &c, n_limit(cfg))?;
    paths.extend(write_reports(&acc, &model, &c, oracle.as_ref(), &dir)?);

    for s in acc.solver_summaries(&model, c.alpha) {
        let best = s.best.as_ref().map(|(m, v)| format!("{} {}", m.to_bit_string(), f17(*v))).unwrap_or("none".into());
        out!(out, "solver {} samples {} valid {} best {best}", s.solver.name(), s.samples, s.valid);
    }
    for p in &paths {
        out!(out, "wrote {}", p.display());
    }
    let errors = acc.errors();
    if !errors.is_empty() {
        let list: Vec<String> = errors
            .iter()
            .map(|(id, msg)| format!("{} k={:?} round {}: {msg}", id.solver.name(), id.k, id.round))
            .collect();
        return Err(CliError::Domain(format!("solvers: {} task(s) failed: {}", errors.len(), list.join("; "))));
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let bytes = to_json_f17(value).map_err(|e| io_err(path, e))?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

fn report(cfg: &Resolved, input: &Path, dir: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let c = cfg.campaign();
    let bytes = fs::read(input).map_err(|e| io_err(input, e))?;
    let acc: CampaignAccumulator = serde_json::from_slice(&bytes).map_err(|e| io_err(input, e))?;
    if acc.n != model.n() {
        return Err(CliError::Domain(format!(
            "{} was recorded on {} assets but the price file has {}",
            input.display(),
            acc.n,
            model.n()
        )));
    }
    let dir = dir.unwrap_or_else(|| c.output_dir.clone());
    let oracle = oracle_mask(&model, &c, n_limit(cfg))?;
    for p in write_reports(&acc, &model, &c, oracle.as_ref(), &dir)? {
        out!(out, "wrote {}", p.display());
    }
    Ok(())
}

fn export(cfg: &Resolved, k: Option<usize>, dir: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let c = cfg.campaign();
    let (lo, hi) = match k {
        Some(k) => (k, k),
        None => c.resolved_range(model.n())?,
    };
    let big = BigMatrix::build(&model, lo..=hi, &c.qubo, &c.shift, qubo_seed(&c))?;
    let dir = dir.unwrap_or_else(|| c.output_dir.clone());
    for p in export_campaign_qubos(&big, &model, &c, &dir)? {
        out!(out, "wrote {}", p.display());
    }
    Ok(())
}

//! Flat dotted-key configuration.
//!
//! Values are layered: built-in defaults, then a JSON config file, then
//! `--set key=value` pairs, then dedicated flags such as `--seed`. Every
//! layer may only name keys that exist in the defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use cqns_core::harness::{CampaignConfig, SaObjective, SolverSpec};
use cqns_core::market_data::ModelParams;
use cqns_core::qubo::{EndEnergy, QuboSpec, ShiftConfig, Weighting};
use cqns_core::solvers::{GaConfig, GeoSaConfig, McConfig, SaConfig, SolverKind, TabuConfig, DEFAULT_N_LIMIT};
use serde_json::{json, Map, Value};

use crate::CliError;

/// Solvers run by `campaign` when the config does not list any.
pub const DEFAULT_SOLVERS: [&str; 5] = ["monte_carlo", "genetic", "sa_custom", "sa_geometric", "tabu"];

#[derive(Debug, Clone, Copy)]
enum Kind {
    Num,
    OptNum,
    Count,
    OptCount,
    Bool,
    Text,
    OptText,
    OptRange,
    Pair,
    Solvers,
    EndEnergy,
    Weighting,
    Objective,
}

fn kind_of(key: &str) -> Option<Kind> {
    use Kind::*;
    Some(match key {
        "data" => OptText,
        "market_ticker" | "output_dir" => Text,
        "risk_free" | "alpha" | "eta" => Num,
        "market_return" | "qubo.lin_coeff" => OptNum,
        "sharpe_excess" | "timing" => Bool,
        "seed" | "tuning_rounds" | "shift.samples_per_size" | "exhaustive.n_limit" | "mc.total_samples" => Count,
        "ga.population" | "ga.generations" | "ga.elites" => Count,
        "sa.sweeps" | "sa.restarts" | "geo.sweeps" | "geo.reads" | "tabu.reads" | "tabu.tenure" => Count,
        "mc.phase1_fraction" | "sa.t_max" | "sa.t_min" | "sa.cooling_rate" | "geo.beta_min" | "geo.beta_max" => Num,
        "tabu.time_cap_ms" => OptCount,
        "size_range" => OptRange,
        "ga.ratio" => Pair,
        "solvers" => Solvers,
        "shift.end_energy" => EndEnergy,
        "qubo.weighting" => Weighting,
        "sa.objective" => Objective,
        _ => return None,
    })
}

/// Every key with its default value.
pub fn defaults() -> BTreeMap<String, Value> {
    let c = CampaignConfig::default();
    let m = ModelParams::default();
    let mc = McConfig::default();
    let ga = GaConfig::default();
    let sa = SaConfig::default();
    let geo = GeoSaConfig::default();
    let tabu = TabuConfig::default();
    let pairs = [
        ("data", Value::Null),
        ("market_ticker", json!("MKT")),
        ("risk_free", json!(m.risk_free)),
        ("market_return", json!(m.market_return)),
        ("alpha", json!(c.alpha)),
        ("sharpe_excess", json!(c.sharpe_excess)),
        ("seed", json!(c.seed)),
        ("output_dir", json!(c.output_dir)),
        ("size_range", json!(c.size_range)),
        ("solvers", json!(DEFAULT_SOLVERS)),
        ("tuning_rounds", json!(c.tuning_rounds)),
        ("eta", json!(c.eta)),
        ("timing", json!(c.timing)),
        ("qubo.weighting", json!(c.qubo.weighting)),
        ("qubo.lin_coeff", json!(c.qubo.lin_coeff)),
        ("shift.samples_per_size", json!(c.shift.samples_per_size)),
        ("shift.end_energy", end_energy_value(c.shift.end_energy)),
        ("exhaustive.n_limit", json!(DEFAULT_N_LIMIT)),
        ("mc.total_samples", json!(mc.total_samples)),
        ("mc.phase1_fraction", json!(mc.phase1_fraction)),
        ("ga.population", json!(ga.population)),
        ("ga.generations", json!(ga.generations)),
        ("ga.elites", json!(ga.elites)),
        ("ga.ratio", json!([ga.ratio.0, ga.ratio.1])),
        ("sa.t_max", json!(sa.t_max)),
        ("sa.t_min", json!(sa.t_min)),
        ("sa.cooling_rate", json!(sa.cooling_rate)),
        ("sa.sweeps", json!(sa.sweeps)),
        ("sa.restarts", json!(sa.restarts)),
        ("sa.objective", json!(SaObjective::default())),
        ("geo.beta_min", json!(geo.beta_min)),
        ("geo.beta_max", json!(geo.beta_max)),
        ("geo.sweeps", json!(geo.sweeps)),
        ("geo.reads", json!(geo.reads)),
        ("tabu.reads", json!(tabu.reads)),
        ("tabu.tenure", json!(tabu.tenure)),
        ("tabu.time_cap_ms", json!(tabu.time_cap.map(|d| d.as_millis() as u64))),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn end_energy_value(e: EndEnergy) -> Value {
    match e {
        EndEnergy::Centered => json!("centered"),
        EndEnergy::Fixed(x) => json!(x),
    }
}

fn check(key: &str, v: &Value) -> Result<(), String> {
    let kind = kind_of(key).ok_or_else(|| format!("unknown config key {key:?}"))?;
    let pair = |v: &Value| v.as_array().is_some_and(|a| a.len() == 2 && a.iter().all(Value::is_u64));
    let ok = match kind {
        Kind::Num => v.is_number(),
        Kind::OptNum => v.is_null() || v.is_number(),
        Kind::Count => v.is_u64(),
        Kind::OptCount => v.is_null() || v.is_u64(),
        Kind::Bool => v.is_boolean(),
        Kind::Text => v.is_string(),
        Kind::OptText => v.is_null() || v.is_string(),
        Kind::OptRange => v.is_null() || pair(v),
        Kind::Pair => pair(v),
        Kind::Solvers => match v.as_array() {
            Some(a) => {
                for name in a {
                    let s = name.as_str().ok_or_else(|| format!("{key}: solver names must be strings"))?;
                    if SolverKind::parse(s).is_none() {
                        return Err(format!("{key}: unknown solver {s:?}"));
                    }
                }
                true
            }
            None => false,
        },
        Kind::EndEnergy => v.as_str() == Some("centered") || v.is_number(),
        Kind::Weighting => matches!(v.as_str(), Some("per_size" | "unweighted")),
        Kind::Objective => matches!(v.as_str(), Some("cqns" | "qubo")),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("config key {key:?} has the wrong type ({})", expected(kind)))
    }
}

fn expected(kind: Kind) -> &'static str {
    match kind {
        Kind::Num => "expected a number",
        Kind::OptNum => "expected a number or null",
        Kind::Count => "expected a non-negative integer",
        Kind::OptCount => "expected a non-negative integer or null",
        Kind::Bool => "expected true or false",
        Kind::Text => "expected a string",
        Kind::OptText => "expected a string or null",
        Kind::OptRange => "expected [lo, hi] or null",
        Kind::Pair => "expected [a, b]",
        Kind::Solvers => "expected a list of solver names",
        Kind::EndEnergy => "expected \"centered\" or a number",
        Kind::Weighting => "expected \"per_size\" or \"unweighted\"",
        Kind::Objective => "expected \"cqns\" or \"qubo\"",
    }
}

/// Fully layered configuration, before conversion into library types.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub values: BTreeMap<String, Value>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
}

impl Resolved {
    pub fn resolve(file: Option<&Path>, ov: &Overrides) -> Result<Self, CliError> {
        let mut values = defaults();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let doc: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
            let Value::Object(map) = doc else {
                return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
            };
            let base = path.parent().unwrap_or(Path::new(""));
            for (key, mut v) in map {
                if key == "data" {
                    if let Some(rel) = v.as_str().filter(|s| Path::new(s).is_relative()) {
                        v = json!(base.join(rel));
                    }
                }
                set(&mut values, &key, v)?;
            }
        }
        for pair in &ov.sets {
            let (key, raw) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {pair:?}")))?;
            let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set(&mut values, key.trim(), v)?;
        }
        if let Some(path) = &ov.data {
            set(&mut values, "data", json!(path))?;
        }
        if let Some(seed) = ov.seed {
            set(&mut values, "seed", json!(seed))?;
        }
        Ok(Self { values })
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect::<Map<_, _>>())
    }

    fn get(&self, key: &str) -> &Value {
        &self.values[key]
    }

    fn num(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("checked on insert")
    }

    fn count(&self, key: &str) -> usize {
        self.get(key).as_u64().expect("checked on insert") as usize
    }

    fn pair(&self, key: &str) -> Option<(usize, usize)> {
        let a = self.get(key).as_array()?;
        Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize))
    }

    pub fn seed(&self) -> u64 {
        self.get("seed").as_u64().expect("checked on insert")
    }

    pub fn data(&self) -> Option<PathBuf> {
        self.get("data").as_str().map(PathBuf::from)
    }

    pub fn market_ticker(&self) -> &str {
        self.get("market_ticker").as_str().expect("checked on insert")
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams { risk_free: self.num("risk_free"), market_return: self.get("market_return").as_f64() }
    }

    pub fn solver_names(&self) -> Vec<SolverKind> {
        let names = self.get("solvers").as_array().expect("checked on insert");
        names.iter().filter_map(|v| v.as_str().and_then(SolverKind::parse)).collect()
    }

    /// The configured parameters for one solver.
    pub fn solver_spec(&self, kind: SolverKind) -> SolverSpec {
        match kind {
            SolverKind::Exhaustive => SolverSpec::Exhaustive { n_limit: self.count("exhaustive.n_limit") },
            SolverKind::MonteCarlo => SolverSpec::MonteCarlo(McConfig {
                total_samples: self.count("mc.total_samples"),
                phase1_fraction: self.num("mc.phase1_fraction"),
            }),
            SolverKind::Genetic => SolverSpec::Genetic(GaConfig {
                population: self.count("ga.population"),
                generations: self.count("ga.generations"),
                elites: self.count("ga.elites"),
                ratio: self.pair("ga.ratio").expect("checked on insert"),
                seed_population: None,
            }),
            SolverKind::SaCustom => SolverSpec::SaCustom {
                config: SaConfig {
                    t_max: self.num("sa.t_max"),
                    t_min: self.num("sa.t_min"),
                    cooling_rate: self.num("sa.cooling_rate"),
                    sweeps: self.count("sa.sweeps"),
                    restarts: self.count("sa.restarts"),
                },
                objective: match self.get("sa.objective").as_str() {
                    Some("qubo") => SaObjective::Qubo,
                    _ => SaObjective::Cqns,
                },
            },
            SolverKind::SaGeometric => SolverSpec::SaGeometric(GeoSaConfig {
                beta_min: self.num("geo.beta_min"),
                beta_max: self.num("geo.beta_max"),
                sweeps: self.count("geo.sweeps"),
                reads: self.count("geo.reads"),
            }),
            SolverKind::Tabu => SolverSpec::Tabu(TabuConfig {
                reads: self.count("tabu.reads"),
                tenure: self.count("tabu.tenure"),
                time_cap: self.get("tabu.time_cap_ms").as_u64().map(Duration::from_millis),
            }),
        }
    }

    pub fn campaign(&self) -> CampaignConfig {
        let end_energy = match self.get("shift.end_energy").as_f64() {
            Some(x) => EndEnergy::Fixed(x),
            None => EndEnergy::Centered,
        };
        CampaignConfig {
            size_range: self.pair("size_range"),
            solvers: self.solver_names().into_iter().map(|k| self.solver_spec(k)).collect(),
            alpha: self.num("alpha"),
            sharpe_excess: self.get("sharpe_excess").as_bool().expect("checked on insert"),
            seed: self.seed(),
            output_dir: PathBuf::from(self.get("output_dir").as_str().expect("checked on insert")),
            tuning_rounds: self.count("tuning_rounds"),
            eta: self.num("eta"),
            qubo: QuboSpec {
                weighting: match self.get("qubo.weighting").as_str() {
                    Some("unweighted") => Weighting::Unweighted,
                    _ => Weighting::PerSize,
                },
                lin_coeff: self.get("qubo.lin_coeff").as_f64(),
            },
            shift: ShiftConfig { samples_per_size: self.count("shift.samples_per_size"), end_energy },
            timing: self.get("timing").as_bool().expect("checked on insert"),
        }
    }
}

fn set(values: &mut BTreeMap<String, Value>, key: &str, v: Value) -> Result<(), CliError> {
    check(key, &v).map_err(CliError::Usage)?;
    values.insert(key.to_string(), v);
    Ok(())
}

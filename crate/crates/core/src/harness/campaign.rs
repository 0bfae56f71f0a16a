use std::collections::BTreeMap;
use std::time::Instant;

use super::{CampaignAccumulator, CampaignConfig, HarnessError, SaObjective, SolverSpec, TaskId, TaskOutput};
use crate::market_data::MarketModel;
use crate::qubo::{graduated_tune, BigMatrix, SizeQubo};
use crate::scoring::Moments;
use crate::solvers::{
    exhaustive_best, genetic, monte_carlo_fat_tailed, simulated_anneal_custom, simulated_anneal_geometric, tabu_search,
    CqnsObjective, QuboObjective, SampleRecord, SizeStats, SolverError, SolverKind,
};
use crate::{par, seed};

/// Records split by validity for one target size.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub valid: Vec<SampleRecord>,
    /// Returned popcount histogram over all input records.
    pub size_counts: BTreeMap<usize, u64>,
}

impl Filtered {
    pub fn invalid(&self, k: usize) -> u64 {
        self.size_counts.iter().filter(|(m, _)| **m != k).map(|(_, c)| c).sum()
    }
}

pub fn validity_filter(records: Vec<SampleRecord>, k: usize) -> Filtered {
    let mut size_counts = BTreeMap::new();
    let mut valid = Vec::new();
    for r in records {
        *size_counts.entry(r.size()).or_insert(0) += 1;
        if r.size() == k {
            valid.push(r);
        }
    }
    Filtered { valid, size_counts }
}

fn task_seed(cfg: &CampaignConfig, solver: SolverKind, k: Option<usize>, round: usize) -> u64 {
    seed::derive(cfg.seed, &[seed::tag(solver.name()), k.map_or(0, |k| k as u64), round as u64])
}

fn landscape(n: usize, records: &[SampleRecord], model: &MarketModel, alpha: f64) -> SizeStats {
    let mut stats = SizeStats::new(n);
    for r in records {
        if let Ok(m) = Moments::of(&r.mask, model) {
            stats.record(&r.mask, m.cqns(alpha));
        }
    }
    stats
}

fn unconstrained_output(
    records: Vec<SampleRecord>,
    samples: u64,
    stats: Option<SizeStats>,
    model: &MarketModel,
    alpha: f64,
    started: Instant,
) -> TaskOutput {
    let n = model.n();
    let stats = stats.unwrap_or_else(|| landscape(n, &records, model, alpha));
    let mut size_counts = BTreeMap::new();
    for r in &records {
        *size_counts.entry(r.size()).or_insert(0) += 1;
    }
    TaskOutput { samples, records, size_counts, stats, elapsed: started.elapsed(), error: None }
}

fn run_unconstrained(spec: &SolverSpec, cfg: &CampaignConfig, model: &MarketModel) -> Result<TaskOutput, SolverError> {
    let alpha = cfg.alpha;
    let seed = task_seed(cfg, spec.kind(), None, 0);
    let started = Instant::now();
    let out = match spec {
        SolverSpec::Exhaustive { n_limit } => {
            let best = exhaustive_best(model, alpha, *n_limit)?;
            let elapsed = started.elapsed();
            let records = best
                .per_size
                .iter()
                .flatten()
                .map(|c| {
                    let k = c.mask.size();
                    SampleRecord::new(c.mask.clone(), c.value, Some(k), SolverKind::Exhaustive, seed, elapsed)
                })
                .collect();
            let samples = best.stats.total();
            unconstrained_output(records, samples, Some(best.stats), model, alpha, started)
        }
        SolverSpec::MonteCarlo(mc) => {
            let r = monte_carlo_fat_tailed(model, alpha, mc, seed)?;
            unconstrained_output(r.per_size_best, r.samples as u64, Some(r.stats), model, alpha, started)
        }
        SolverSpec::Genetic(ga) => {
            let r = genetic(model, alpha, ga, seed)?;
            unconstrained_output(r.elites, r.evaluations as u64, None, model, alpha, started)
        }
        SolverSpec::SaCustom { config, .. } => {
            let recs = simulated_anneal_custom(&CqnsObjective::new(model, alpha), config, seed)?;
            let samples = recs.len() as u64;
            unconstrained_output(recs, samples, None, model, alpha, started)
        }
        SolverSpec::SaGeometric(_) | SolverSpec::Tabu(_) => unreachable!("per-size solver"),
    };
    Ok(out)
}

fn sample_qubo(spec: &SolverSpec, q: &SizeQubo, seed: u64) -> Result<Vec<SampleRecord>, SolverError> {
    let obj = QuboObjective::scaled(&q.scaled);
    match spec {
        SolverSpec::SaGeometric(c) => simulated_anneal_geometric(&obj, c, seed),
        SolverSpec::Tabu(c) => tabu_search(&obj, c, seed),
        SolverSpec::SaCustom { config, objective: SaObjective::Qubo } => simulated_anneal_custom(&obj, config, seed),
        _ => unreachable!("unconstrained solver"),
    }
}

/// All tuning rounds of one per-size solver at one target size.
fn run_per_size(
    spec: &SolverSpec,
    k: usize,
    base: &SizeQubo,
    cfg: &CampaignConfig,
    model: &MarketModel,
) -> Vec<(TaskId, TaskOutput)> {
    let n = model.n();
    let solver = spec.kind();
    let mut out = Vec::new();
    let mut q = base.clone();
    for round in 0..=cfg.tuning_rounds {
        let id = TaskId { solver, k: Some(k), round };
        let started = Instant::now();
        let records = match sample_qubo(spec, &q, task_seed(cfg, solver, Some(k), round)) {
            Ok(r) => r,
            Err(e) => {
                out.push((id, TaskOutput::failed(n, e.to_string())));
                break;
            }
        };
        let sizes: Vec<usize> = records.iter().map(SampleRecord::size).collect();
        let samples = records.len() as u64;
        let stats = landscape(n, &records, model, cfg.alpha);
        let filtered = validity_filter(records, k);
        out.push((
            id,
            TaskOutput {
                samples,
                records: filtered.valid,
                size_counts: filtered.size_counts,
                stats,
                elapsed: started.elapsed(),
                error: None,
            },
        ));
        if round < cfg.tuning_rounds {
            match graduated_tune(&q.scaled.shift, &sizes, cfg.eta).and_then(|s| q.reshift(s)) {
                Ok(next) => q = next,
                Err(e) => {
                    out.push((TaskId { round: round + 1, ..id }, TaskOutput::failed(n, e.to_string())));
                    break;
                }
            }
        }
    }
    out
}

/// The per-size QUBOs a campaign samples, or `None` if no solver needs them.
pub fn campaign_qubos(cfg: &CampaignConfig, model: &MarketModel) -> Result<Option<BigMatrix>, HarnessError> {
    cfg.validate(model.n())?;
    if !cfg.solvers.iter().any(SolverSpec::is_per_size) {
        return Ok(None);
    }
    let (lo, hi) = cfg.resolved_range(model.n())?;
    let big = BigMatrix::build(model, lo..=hi, &cfg.qubo, &cfg.shift, seed::derive(cfg.seed, &[seed::tag("qubo")]))?;
    Ok(Some(big))
}

pub fn run_campaign(cfg: &CampaignConfig, model: &MarketModel) -> Result<CampaignAccumulator, HarnessError> {
    let qubos = campaign_qubos(cfg, model)?;
    run_campaign_with(cfg, model, qubos.as_ref())
}

/// Runs a campaign against prebuilt QUBOs from [`campaign_qubos`].
pub fn run_campaign_with(
    cfg: &CampaignConfig,
    model: &MarketModel,
    qubos: Option<&BigMatrix>,
) -> Result<CampaignAccumulator, HarnessError> {
    let n = model.n();
    cfg.validate(n)?;
    let mut acc = CampaignAccumulator::new(n);

    let unconstrained: Vec<&SolverSpec> = cfg.solvers.iter().filter(|s| !s.is_per_size()).collect();
    let outs = par::map_slice(&unconstrained, |spec| {
        let id = TaskId { solver: spec.kind(), k: None, round: 0 };
        let out = run_unconstrained(spec, cfg, model).unwrap_or_else(|e| TaskOutput::failed(n, e.to_string()));
        (id, out)
    });
    for (id, out) in outs {
        acc.insert(id, out);
    }

    let per_size: Vec<&SolverSpec> = cfg.solvers.iter().filter(|s| s.is_per_size()).collect();
    if !per_size.is_empty() {
        let big = qubos.ok_or_else(|| HarnessError::Config("per-size solvers need QUBOs".into()))?;
        let jobs: Vec<(&SolverSpec, usize, &SizeQubo)> =
            per_size.iter().flat_map(|s| big.qubos.iter().map(move |(k, q)| (*s, *k, q))).collect();
        let outs = par::map_slice(&jobs, |(spec, k, q)| run_per_size(spec, *k, q, cfg, model));
        for (id, out) in outs.into_iter().flatten() {
            acc.insert(id, out);
        }
    }

    if !cfg.timing {
        acc.strip_timing();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::Portfolio;
    use std::time::Duration;

    #[test]
    fn filter_partitions_by_popcount() {
        let recs: Vec<SampleRecord> = [0b011u64, 0b111, 0b001, 0b101]
            .iter()
            .map(|&b| SampleRecord::new(Portfolio::from_u64(3, b), 0.0, Some(2), SolverKind::Tabu, 0, Duration::ZERO))
            .collect();
        let f = validity_filter(recs, 2);
        assert_eq!(f.valid.len(), 2);
        assert_eq!(f.invalid(2), 2);
        assert_eq!(f.size_counts.values().sum::<u64>(), 4);
        let none = validity_filter(f.valid.clone(), 1);
        assert!(none.valid.is_empty());
        assert_eq!(none.size_counts.get(&2), Some(&2));
    }
}

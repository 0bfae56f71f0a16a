use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::market_data::MarketModel;
use crate::portfolio::Portfolio;
use crate::scoring::Moments;
use crate::solvers::{SampleRecord, SizeStats, SolverKind};

/// Identifies one solver task. Tasks are ordered by solver, then size
/// (unconstrained tasks first), then tuning round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId {
    pub solver: SolverKind,
    pub k: Option<usize>,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    /// Masks drawn or evaluated.
    pub samples: u64,
    /// Valid records in emission order.
    pub records: Vec<SampleRecord>,
    /// Returned popcount histogram over every record, valid or not.
    pub size_counts: BTreeMap<usize, u64>,
    /// Exact-CQNS landscape statistics of everything the task scored.
    pub stats: SizeStats,
    pub elapsed: Duration,
    pub error: Option<String>,
}

impl TaskOutput {
    pub fn failed(n: usize, message: String) -> Self {
        Self {
            samples: 0,
            records: Vec::new(),
            size_counts: BTreeMap::new(),
            stats: SizeStats::new(n),
            elapsed: Duration::ZERO,
            error: Some(message),
        }
    }
}

/// Union of task outputs. Merging is a keyed union where an existing task
/// wins, so merging an accumulator with itself, or the same tasks in any
/// grouping or order, gives the same result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignAccumulator {
    pub n: usize,
    #[serde(serialize_with = "tasks_out", deserialize_with = "tasks_in")]
    pub tasks: BTreeMap<TaskId, TaskOutput>,
}

fn tasks_out<S: Serializer>(tasks: &BTreeMap<TaskId, TaskOutput>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(tasks.iter())
}

fn tasks_in<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<TaskId, TaskOutput>, D::Error> {
    let pairs: Vec<(TaskId, TaskOutput)> = Vec::deserialize(d)?;
    Ok(pairs.into_iter().collect())
}

/// Per-solver totals across tasks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub solver: SolverKind,
    pub samples: u64,
    pub valid: u64,
    /// Valid records whose mask was already stored by an earlier task.
    pub duplicates: u64,
    pub best: Option<(Portfolio, f64)>,
    pub elapsed: Duration,
}

impl CampaignAccumulator {
    pub fn new(n: usize) -> Self {
        Self { n, tasks: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: TaskId, out: TaskOutput) {
        self.tasks.entry(id).or_insert(out);
    }

    pub fn merge(&mut self, other: &CampaignAccumulator) {
        for (id, out) in &other.tasks {
            self.tasks.entry(*id).or_insert_with(|| out.clone());
        }
    }

    pub fn merged(mut self, other: &CampaignAccumulator) -> Self {
        self.merge(other);
        self
    }

    /// Valid records deduplicated by mask, first seen in task order wins.
    pub fn records(&self) -> Vec<&SampleRecord> {
        let mut seen = HashSet::new();
        self.tasks.values().flat_map(|t| t.records.iter()).filter(|r| seen.insert(&r.mask)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.values().all(|t| t.records.is_empty())
    }

    pub fn size_stats(&self) -> SizeStats {
        let mut s = SizeStats::new(self.n);
        for t in self.tasks.values() {
            s.merge(&t.stats);
        }
        s
    }

    pub fn errors(&self) -> Vec<(TaskId, &str)> {
        self.tasks.iter().filter_map(|(id, t)| t.error.as_deref().map(|e| (*id, e))).collect()
    }

    /// Zeroes every wall-clock field.
    pub fn strip_timing(&mut self) {
        for t in self.tasks.values_mut() {
            t.elapsed = Duration::ZERO;
            for r in &mut t.records {
                r.elapsed = Duration::ZERO;
            }
        }
    }

    /// Totals per solver that ran, with the best valid mask by exact CQNS.
    pub fn solver_summaries(&self, model: &MarketModel, alpha: f64) -> Vec<SolverSummary> {
        let mut out: BTreeMap<SolverKind, SolverSummary> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (id, t) in &self.tasks {
            let s = out.entry(id.solver).or_insert_with(|| SolverSummary {
                solver: id.solver,
                samples: 0,
                valid: 0,
                duplicates: 0,
                best: None,
                elapsed: Duration::ZERO,
            });
            s.samples += t.samples;
            s.valid += t.records.len() as u64;
            s.elapsed += t.elapsed;
            for r in &t.records {
                if !seen.insert(&r.mask) {
                    s.duplicates += 1;
                }
                let Ok(m) = Moments::of(&r.mask, model) else {
                    continue;
                };
                let v = m.cqns(alpha);
                let better = match &s.best {
                    None => true,
                    Some((bm, bv)) => v < *bv || (v == *bv && r.mask < *bm),
                };
                if better {
                    s.best = Some((r.mask.clone(), v));
                }
            }
        }
        out.into_values().collect()
    }
}

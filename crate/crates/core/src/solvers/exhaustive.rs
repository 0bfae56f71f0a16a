//! Exhaustive enumeration of the mask landscape.

use serde::{Deserialize, Serialize};

use super::{CqnsObjective, FlipObjective, SizeStats, SolverError};
use crate::market_data::MarketModel;
use crate::par;
use crate::portfolio::Portfolio;
use crate::scoring::Moments;

/// Default ceiling on `N` for full `2^N` enumeration.
pub const DEFAULT_N_LIMIT: usize = 24;
/// Largest `C(N, k)` enumerated for a single size.
pub const MAX_SIZE_ENUMERATION: u128 = 10_000_000;

/// Below this size every mask is scored from scratch; above it the walk
/// follows a Gray code with incremental updates.
const DIRECT_MAX_N: usize = 16;
const CHUNK_BITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mask: Portfolio,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveBest {
    pub overall: Candidate,
    /// Index `m` holds the best mask of size `m` (`None` for `m = 0`).
    pub per_size: Vec<Option<Candidate>>,
    pub stats: SizeStats,
}

/// Scores all `2^N − 1` non-empty masks. `value` must be finite on them.
pub fn enumerate_all<O: FlipObjective>(obj: &O, n_limit: usize) -> Result<SizeStats, SolverError> {
    let n = obj.n();
    if n > n_limit.min(63) {
        return Err(SolverError::TooLarge { n, limit: n_limit.min(63) as u128 });
    }
    let chunk_bits = CHUNK_BITS.min(n);
    let chunks = 1usize << (n - chunk_bits);
    let per_chunk = 1u64 << chunk_bits;
    let parts = par::map_range(chunks, |c| {
        let mut stats = SizeStats::new(n);
        let start = c as u64 * per_chunk;
        if n <= DIRECT_MAX_N {
            for i in start..start + per_chunk {
                let g = i ^ (i >> 1);
                if g != 0 {
                    let mask = Portfolio::from_u64(n, g);
                    let v = obj.evaluate(&mask);
                    stats.record(&mask, v);
                }
            }
        } else {
            let mut st = obj.init(&Portfolio::from_u64(n, start ^ (start >> 1)));
            for i in start..start + per_chunk {
                if i != start {
                    obj.flip(&mut st, i.trailing_zeros() as usize);
                }
                let m = obj.size(&st);
                if m > 0 {
                    stats.bins[m].push_with(obj.value(&st), || obj.mask(&st));
                }
            }
        }
        stats
    });
    let mut stats = SizeStats::new(n);
    for p in &parts {
        stats.merge(p);
    }
    if n > DIRECT_MAX_N {
        // incremental values drift by rounding; report winners scored directly
        for bin in &mut stats.bins {
            if let Some(m) = &bin.argmin {
                bin.min = obj.evaluate(m);
            }
        }
    }
    Ok(stats)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Scores every mask of exactly `k` assets, split by first asset.
pub fn enumerate_size<O: FlipObjective>(obj: &O, k: usize) -> Result<SizeStats, SolverError> {
    let n = obj.n();
    if k == 0 || k > n {
        return Err(SolverError::BadConfig(format!("size {k} outside [1, {n}]")));
    }
    let total = binomial(n, k);
    if total > MAX_SIZE_ENUMERATION {
        return Err(SolverError::TooLarge { n, limit: MAX_SIZE_ENUMERATION });
    }
    let parts = par::map_range(n - k + 1, |first| {
        let mut stats = SizeStats::new(n);
        let mut rest: Vec<usize> = (first + 1..first + k).collect();
        loop {
            let mask = Portfolio::from_indices(n, std::iter::once(first).chain(rest.iter().copied()));
            stats.record(&mask, obj.evaluate(&mask));
            if rest.is_empty() || !next_combination_from(&mut rest, first + 1, n) {
                break;
            }
        }
        stats
    });
    let mut stats = SizeStats::new(n);
    for p in &parts {
        stats.merge(p);
    }
    Ok(stats)
}

fn next_combination_from(idx: &mut [usize], lo: usize, n: usize) -> bool {
    for x in idx.iter_mut() {
        *x -= lo;
    }
    let more = next_combination(idx, n - lo);
    for x in idx.iter_mut() {
        *x += lo;
    }
    more
}

fn best_from_stats(stats: SizeStats, model: &MarketModel, alpha: f64) -> Result<ExhaustiveBest, SolverError> {
    let per_size: Vec<Option<Candidate>> =
        stats.bins.iter().map(|b| b.argmin.clone().map(|mask| Candidate { value: b.min, mask })).collect();
    let (value, mask) = stats.best().ok_or(SolverError::BadConfig("no masks enumerated".into()))?;
    let mask = mask.clone();
    let check = Moments::of(&mask, model)?.cqns(alpha);
    debug_assert_eq!(check.to_bits(), value.to_bits());
    Ok(ExhaustiveBest { overall: Candidate { mask, value }, per_size, stats })
}

/// Global CQNS minimum over every non-empty portfolio.
pub fn exhaustive_best(model: &MarketModel, alpha: f64, n_limit: usize) -> Result<ExhaustiveBest, SolverError> {
    let stats = enumerate_all(&CqnsObjective::new(model, alpha), n_limit)?;
    best_from_stats(stats, model, alpha)
}

/// CQNS minimum over portfolios of exactly `k` assets.
pub fn exhaustive_best_of_size(model: &MarketModel, alpha: f64, k: usize) -> Result<Candidate, SolverError> {
    let stats = enumerate_size(&CqnsObjective::new(model, alpha), k)?;
    let bin = &stats.bins[k];
    Ok(Candidate { mask: bin.argmin.clone().expect("k-combinations exist"), value: bin.min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::QuboObjective;
    use nalgebra::DMatrix;

    fn model(n: usize) -> MarketModel {
        let a = DMatrix::from_fn(n, n, |i, j| (((i + 1) * (j + 2)) % 7) as f64 / 7.0 - 0.4);
        let cov = (&a * a.transpose()) * 1e-4;
        let cov = DMatrix::from_fn(n, n, |i, j| if i <= j { cov[(i, j)] } else { cov[(j, i)] });
        let mc: Vec<f64> = (0..n).map(|i| 0.02 + 0.03 * ((i * 5) % n) as f64).collect();
        MarketModel::from_moments((0..n).map(|i| format!("A{i}")).collect(), cov, mc, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn combinations_are_complete() {
        let mut idx = vec![0, 1, 2];
        let mut count = 1;
        while next_combination(&mut idx, 6) {
            count += 1;
        }
        assert_eq!(count, 20);
        assert_eq!(binomial(60, 5), 5_461_512);
    }

    #[test]
    fn per_size_enumeration_counts() {
        let m = model(9);
        let obj = CqnsObjective::new(&m, 1.0);
        for k in 1..=9 {
            let s = enumerate_size(&obj, k).unwrap();
            assert_eq!(s.bins[k].count as u128, binomial(9, k));
        }
    }

    #[test]
    fn full_enumeration_agrees_with_per_size() {
        let m = model(10);
        let best = exhaustive_best(&m, 1.0, DEFAULT_N_LIMIT).unwrap();
        assert_eq!(best.stats.total(), 1023);
        for k in 1..=10 {
            let c = exhaustive_best_of_size(&m, 1.0, k).unwrap();
            let from_all = best.per_size[k].as_ref().unwrap();
            assert_eq!(c.mask, from_all.mask);
            assert_eq!(c.value.to_bits(), from_all.value.to_bits());
        }
    }

    #[test]
    fn gray_walk_matches_direct_walk() {
        let n = 17;
        // irrational-ish entries so no two masks tie
        let q = DMatrix::from_fn(n, n, |i, j| ((i * j + i + j) as f64 * 0.713).sin() - 0.05 * (i + j) as f64);
        let q = DMatrix::from_fn(n, n, |i, j| if i <= j { q[(i, j)] } else { q[(j, i)] });
        let obj = QuboObjective::new(&q, None);
        let stats = enumerate_all(&obj, 20).unwrap();
        assert_eq!(stats.total(), (1 << 17) - 1);
        for (k, bin) in stats.bins.iter().enumerate().skip(1) {
            let direct = enumerate_size(&obj, k).unwrap();
            assert_eq!(bin.argmin, direct.bins[k].argmin, "size {k}");
            assert_eq!(bin.min.to_bits(), direct.bins[k].min.to_bits());
        }
    }

    #[test]
    fn too_large_is_refused() {
        let m = model(12);
        assert!(matches!(exhaustive_best(&m, 1.0, 10), Err(SolverError::TooLarge { n: 12, .. })));
    }
}

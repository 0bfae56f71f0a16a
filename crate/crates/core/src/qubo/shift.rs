//! Quadratic cardinality penalty `S(m) = a·m + b·m²`.
//!
//! Three anchors fix the penalty for target size `k` in an `N`-asset QUBO:
//! `S(0) = 0`, `S(k) = 0` and `Ē(N) + S(N) = end_energy`, where `Ē(m)` is the
//! mean raw energy of masks with `m` assets. Hence `a = −k·b` and
//! `b = (end_energy − Ē(N)) / (N·(N − k))`.
//!
//! The penalty is encoded into the coefficients through
//! `m = Σx_i` and `m² = Σx_i + 2Σ_{i<j} x_i x_j`: the diagonal gains `a + b`
//! and every ordered off-diagonal entry gains `b`.

use nalgebra::DMatrix;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{QuboError, RawQubo};
use crate::portfolio::Portfolio;
use crate::{par, seed};

pub const DEFAULT_SAMPLES_PER_SIZE: usize = 200;
pub const DEFAULT_ETA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams {
    pub n: usize,
    pub target_size: usize,
    /// `a`
    pub lin: f64,
    /// `b`
    pub quad: f64,
    pub end_energy: f64,
    /// `Ē(N)`, kept so the shift can be re-solved for a new endpoint.
    pub full_energy: f64,
}

impl ShiftParams {
    /// The zero penalty, anchored at the unshifted full-mask energy.
    pub fn identity(n: usize, k: usize, full_energy: f64) -> Self {
        Self { n, target_size: k, lin: 0.0, quad: 0.0, end_energy: full_energy, full_energy }
    }

    /// `S(m)`, evaluated as `b·m·(m − k)` so both zero anchors are exact.
    #[inline]
    pub fn penalty(&self, m: usize) -> f64 {
        let (m, k) = (m as f64, self.target_size as f64);
        self.quad * (m * (m - k))
    }
}

/// Mean raw energy per popcount `m ∈ [0, N]`. Sizes `0` and `N` are exact;
/// every other size averages `samples_per_size` uniformly drawn masks.
pub fn estimate_size_energy(raw: &RawQubo, samples_per_size: usize, seed: u64) -> Vec<f64> {
    let n = raw.n;
    let samples = samples_per_size.max(1);
    par::map_range(n + 1, |m| {
        if m == 0 {
            return 0.0;
        }
        if m == n {
            return raw.energy(&Portfolio::full(n));
        }
        let mut rng = seed::rng(seed::derive(seed, &[m as u64]));
        let mut total = 0.0;
        for _ in 0..samples {
            let picked = index::sample(&mut rng, n, m);
            let idx: Vec<usize> = picked.into_iter().collect();
            let mut e = 0.0;
            for &i in &idx {
                for &j in &idx {
                    e += raw.q[(i, j)];
                }
            }
            total += e;
        }
        total / samples as f64
    })
}

/// Solves the three-anchor system for target size `k`.
pub fn solve_shift(size_energy: &[f64], k: usize, end_energy: f64) -> Result<ShiftParams, QuboError> {
    let n = size_energy.len().saturating_sub(1);
    if k == 0 || k >= n {
        return Err(QuboError::DegenerateAnchor { k, n });
    }
    let full = size_energy[n];
    if end_energy <= full {
        log::warn!(
            "end energy {end_energy} does not exceed the full-mask mean energy {full}; the penalty rewards oversizing"
        );
    }
    let quad = (end_energy - full) / (n as f64 * (n - k) as f64);
    Ok(ShiftParams { n, target_size: k, lin: -(k as f64) * quad, quad, end_energy, full_energy: full })
}

/// Endpoint that gives the shifted mean-energy curve zero slope at `k`
/// (central difference), clamped to stay positive.
pub fn centered_end_energy(size_energy: &[f64], k: usize) -> Result<f64, QuboError> {
    let n = size_energy.len().saturating_sub(1);
    if k == 0 || k >= n {
        return Err(QuboError::DegenerateAnchor { k, n });
    }
    let slope = (size_energy[k + 1] - size_energy[k - 1]) / 2.0;
    let quad = (-slope / k as f64).max(0.0);
    let end = size_energy[n] + quad * (n as f64 * (n - k) as f64);
    let floor = f64::EPSILON * (1.0 + size_energy[n].abs());
    Ok(end.max(floor))
}

/// Adds `S(popcount)` to the coefficients.
pub fn apply_shift(raw: &RawQubo, shift: &ShiftParams) -> DMatrix<f64> {
    let mut q = raw.q.clone();
    let diag = shift.lin + shift.quad;
    for i in 0..raw.n {
        for j in 0..raw.n {
            q[(i, j)] += if i == j { diag } else { shift.quad };
        }
    }
    q
}

pub fn median(values: &[usize]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] as f64 } else { (v[mid - 1] + v[mid]) as f64 / 2.0 })
}

/// One graduated re-tuning step.
///
/// The endpoint moves multiplicatively by `eta·(k − median)/N`. Raising the
/// endpoint steepens the penalty, which pulls the penalized curve's minimum
/// below `k`, so the step runs against the size error: undersized results
/// lower the endpoint and oversized ones raise it. The endpoint never drops
/// below the full-mask energy, so the penalty stays non-negative above `k`.
pub fn graduated_tune(prior: &ShiftParams, observed_sizes: &[usize], eta: f64) -> Result<ShiftParams, QuboError> {
    let med = median(observed_sizes).ok_or(QuboError::NoObservations)?;
    let (n, k) = (prior.n, prior.target_size);
    let step = eta * (k as f64 - med) / n as f64;
    if step == 0.0 {
        return Ok(*prior);
    }
    // Move the penalty height `end − Ē(N)`, keeping it positive.
    let height = (prior.end_energy - prior.full_energy).max(0.0);
    let new_height = height * (1.0 - step).max(0.0);
    let mut sizes = vec![0.0; n + 1];
    sizes[n] = prior.full_energy;
    solve_shift(&sizes, k, prior.full_energy + new_height)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(n: usize, full: f64) -> Vec<f64> {
        let mut e = vec![0.0; n + 1];
        e[n] = full;
        e
    }

    #[test]
    fn no_op_anchor() {
        let s = solve_shift(&curve(10, -0.5), 4, -0.5).unwrap();
        assert_eq!(s.quad, 0.0);
        assert_eq!(s.lin, 0.0);
    }

    #[test]
    fn closed_form_example() {
        let s = solve_shift(&curve(60, -1.0), 30, 1.0).unwrap();
        assert!((s.quad - 2.0 / 1800.0).abs() < 1e-18);
        assert_eq!(s.lin, -30.0 * s.quad);
        assert_eq!(s.penalty(0), 0.0);
        assert_eq!(s.penalty(30), 0.0);
        assert!((-1.0 + s.penalty(60) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_anchor() {
        assert!(matches!(solve_shift(&curve(10, 0.0), 10, 1.0), Err(QuboError::DegenerateAnchor { .. })));
        assert!(matches!(solve_shift(&curve(10, 0.0), 0, 1.0), Err(QuboError::DegenerateAnchor { .. })));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3, 1, 2]), Some(2.0));
        assert_eq!(median(&[4, 1, 2, 3]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn tuning_converged_is_a_fixed_point() {
        let s = solve_shift(&curve(12, -0.4), 9, 0.2).unwrap();
        let t = graduated_tune(&s, &[9, 9, 8, 10, 9], 0.5).unwrap();
        assert_eq!(t.end_energy, s.end_energy);
        assert_eq!(t.quad, s.quad);
    }

    #[test]
    fn tuning_relaxes_penalty_for_undersized_results() {
        let s = solve_shift(&curve(12, -0.4), 9, 0.2).unwrap();
        let t = graduated_tune(&s, &[5, 6, 7], 0.5).unwrap();
        assert!(t.quad < s.quad);
        assert!(t.quad >= 0.0);
        let up = graduated_tune(&s, &[11, 11, 12], 0.5).unwrap();
        assert!(up.quad > s.quad);
        assert!(matches!(graduated_tune(&s, &[], 0.5), Err(QuboError::NoObservations)));
    }
}

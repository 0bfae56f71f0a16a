//! Per-cardinality QUBO construction.
//!
//! For a target size `k` the raw QUBO puts covariance content on the
//! quadratic terms and the negative expected returns on the linear
//! (diagonal) terms:
//!
//! ```text
//! per_size:   q_ij = cov_ij / k²                     (i ≠ j)
//!             q_ii = cov_ii / k² − c(k)·r_i          c(k) = 1/k by default
//! unweighted: q_ij = cov_ij,  q_ii = cov_ii − c·r_i  c = 1 by default
//! ```
//!
//! Matrices are stored symmetric and the energy of a mask `x` is
//! `Σ_i Σ_j q_ij x_i x_j`, so on the slice `popcount(x) = k` the per-size
//! energy equals `Var(R_w) − E[R_w]`. That is a quadratic surrogate of CQNS;
//! the exact score is always recomputed from the mask.
//!
//! The pipeline per size is [`build_raw_qubo`] → [`estimate_size_energy`] →
//! [`solve_shift`] → [`apply_shift`] → [`scale`], bundled by
//! [`build_scaled_qubo`] and, across sizes, [`BigMatrix::build`].

mod export;
mod ising;
mod shift;

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::MarketModel;
use crate::portfolio::Portfolio;
use crate::scoring::{self, ScoringError};
use crate::{par, seed};

pub use export::{export_qubo, import_qubo, QuboExport, QuboExportMeta, ShiftExport};
pub use ising::{ising_from_matrix, to_ising, validate_ranges, IsingModel, RangeViolation, H_RANGE, J_RANGE};
pub use shift::{
    apply_shift, centered_end_energy, estimate_size_energy, graduated_tune, median, solve_shift, ShiftParams,
    DEFAULT_ETA, DEFAULT_SAMPLES_PER_SIZE,
};

/// Largest absolute coefficient after scaling.
pub const SCALE_TARGET: f64 = 0.9;

#[derive(Debug, Error)]
pub enum QuboError {
    #[error("target size {k} outside [{min}, {max}]")]
    BadSize { k: usize, min: usize, max: usize },
    #[error("anchor system is singular for target size {k} of {n}")]
    DegenerateAnchor { k: usize, n: usize },
    #[error("cannot scale an all-zero matrix")]
    ZeroMatrix,
    #[error("tuning needs at least one observed portfolio size")]
    NoObservations,
    #[error("{0}")]
    Range(#[from] RangeViolation),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed QUBO file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed QUBO file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    PerSize,
    Unweighted,
}

/// How the raw QUBO is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuboSpec {
    pub weighting: Weighting,
    /// Linear coefficient multiplier. `None` picks `1/k` for per-size and
    /// `1` for unweighted matrices.
    pub lin_coeff: Option<f64>,
}

impl Default for QuboSpec {
    fn default() -> Self {
        Self { weighting: Weighting::PerSize, lin_coeff: None }
    }
}

impl QuboSpec {
    pub fn lin_coeff(&self, k: usize) -> f64 {
        self.lin_coeff.unwrap_or(match self.weighting {
            Weighting::PerSize => 1.0 / k as f64,
            Weighting::Unweighted => 1.0,
        })
    }
}

/// `x'Qx` over the selected indices.
pub fn qubo_energy(q: &DMatrix<f64>, mask: &Portfolio) -> f64 {
    let idx: Vec<usize> = mask.indices().collect();
    let mut e = 0.0;
    for &i in &idx {
        for &j in &idx {
            e += q[(i, j)];
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawQubo {
    pub n: usize,
    pub target_size: usize,
    pub q: DMatrix<f64>,
    pub weighting: Weighting,
    pub lin_coeff: f64,
}

impl RawQubo {
    pub fn energy(&self, mask: &Portfolio) -> f64 {
        qubo_energy(&self.q, mask)
    }

    /// Largest |off-diagonal| over largest |diagonal| coefficient.
    pub fn quadratic_to_linear_ratio(&self) -> f64 {
        let (mut lin, mut quad) = (0.0f64, 0.0f64);
        for i in 0..self.n {
            lin = lin.max(self.q[(i, i)].abs());
            for j in 0..self.n {
                if i != j {
                    quad = quad.max(self.q[(i, j)].abs());
                }
            }
        }
        quad / lin
    }
}

/// Raw QUBO for target size `k`, `1 <= k <= N − 1`.
pub fn build_raw_qubo(model: &MarketModel, k: usize, spec: &QuboSpec) -> Result<RawQubo, QuboError> {
    let n = model.n();
    if k < 1 || k + 1 > n {
        return Err(QuboError::BadSize { k, min: 1, max: n.saturating_sub(1) });
    }
    let c = spec.lin_coeff(k);
    let w = match spec.weighting {
        Weighting::PerSize => 1.0 / (k * k) as f64,
        Weighting::Unweighted => 1.0,
    };
    let q = DMatrix::from_fn(n, n, |i, j| {
        let quad = model.cov[(i, j)] * w;
        if i == j {
            quad - model.expected_returns[i] * c
        } else {
            quad
        }
    });
    Ok(RawQubo { n, target_size: k, q, weighting: spec.weighting, lin_coeff: c })
}

/// A shifted QUBO scaled so its largest |coefficient| is 0.9.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledQubo {
    pub n: usize,
    pub target_size: usize,
    /// Scaled symmetric coefficients.
    pub matrix: DMatrix<f64>,
    pub scale: f64,
    pub shift: ShiftParams,
}

impl ScaledQubo {
    pub fn energy(&self, mask: &Portfolio) -> f64 {
        qubo_energy(&self.matrix, mask)
    }

    /// Maps a scaled energy back to raw QUBO energy: `E/s − S(m)`.
    pub fn unscale_energy(&self, scaled_energy: f64, size: usize) -> f64 {
        scaled_energy / self.scale - self.shift.penalty(size)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Multiplies every entry by `0.9 / max|entry|`.
pub fn scale(shifted: DMatrix<f64>, shift: ShiftParams) -> Result<ScaledQubo, QuboError> {
    let max = shifted.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Err(QuboError::ZeroMatrix);
    }
    let s = SCALE_TARGET / max;
    Ok(ScaledQubo { n: shifted.nrows(), target_size: shift.target_size, matrix: shifted * s, scale: s, shift })
}

/// Raw energy and exact CQNS recovered from a sampler result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refactored {
    pub raw_energy: f64,
    pub cqns: f64,
}

/// Inverts scaling and shift for a sampled energy, and rescoring the mask
/// exactly. The QUBO only approximates CQNS, so the score never comes from
/// the energy.
pub fn refactor_energy(
    sample_energy: f64,
    q: &ScaledQubo,
    mask: &Portfolio,
    model: &MarketModel,
    alpha: f64,
) -> Result<Refactored, QuboError> {
    if mask.is_empty() {
        return Err(ScoringError::EmptyPortfolio.into());
    }
    Ok(Refactored {
        raw_energy: q.unscale_energy(sample_energy, mask.size()),
        cqns: scoring::cqns(mask, model, alpha)?,
    })
}

/// How the endpoint anchor of each size's penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndEnergy {
    /// [`centered_end_energy`]: the sampled mean-energy curve gets zero slope
    /// at the target size.
    Centered,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub samples_per_size: usize,
    pub end_energy: EndEnergy,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self { samples_per_size: DEFAULT_SAMPLES_PER_SIZE, end_energy: EndEnergy::Centered }
    }
}

/// Raw QUBO, sampled size-energy curve and scaled QUBO for one size.
#[derive(Debug, Clone)]
pub struct SizeQubo {
    pub raw: RawQubo,
    pub size_energy: Vec<f64>,
    pub scaled: ScaledQubo,
}

impl SizeQubo {
    /// Rebuilds the scaled matrix with a new shift.
    pub fn reshift(&self, shift: ShiftParams) -> Result<Self, QuboError> {
        let scaled = scale(apply_shift(&self.raw, &shift), shift)?;
        Ok(Self { raw: self.raw.clone(), size_energy: self.size_energy.clone(), scaled })
    }
}

pub fn build_scaled_qubo(
    model: &MarketModel,
    k: usize,
    spec: &QuboSpec,
    shift_cfg: &ShiftConfig,
    seed: u64,
) -> Result<SizeQubo, QuboError> {
    let raw = build_raw_qubo(model, k, spec)?;
    let size_energy = estimate_size_energy(&raw, shift_cfg.samples_per_size, seed);
    let end = match shift_cfg.end_energy {
        EndEnergy::Centered => centered_end_energy(&size_energy, k)?,
        EndEnergy::Fixed(e) => e,
    };
    let shift = solve_shift(&size_energy, k, end)?;
    let scaled = scale(apply_shift(&raw, &shift), shift)?;
    Ok(SizeQubo { raw, size_energy, scaled })
}

/// One scaled QUBO per target size.
#[derive(Debug, Clone)]
pub struct BigMatrix {
    pub qubos: BTreeMap<usize, SizeQubo>,
}

impl BigMatrix {
    /// Builds every size in `sizes` (which must lie in `[2, N − 1]`)
    /// independently; size `k` samples with seed `derive(seed, [k])`.
    pub fn build(
        model: &MarketModel,
        sizes: RangeInclusive<usize>,
        spec: &QuboSpec,
        shift_cfg: &ShiftConfig,
        seed: u64,
    ) -> Result<Self, QuboError> {
        let n = model.n();
        let (lo, hi) = (*sizes.start(), *sizes.end());
        if lo < 2 || hi + 1 > n || lo > hi {
            let k = if lo < 2 || lo > hi { lo } else { hi };
            return Err(QuboError::BadSize { k, min: 2, max: n.saturating_sub(1) });
        }
        let ks: Vec<usize> = sizes.collect();
        let built = par::map_slice(&ks, |&k| {
            build_scaled_qubo(model, k, spec, shift_cfg, seed::derive(seed, &[seed::tag("bigmatrix"), k as u64]))
        });
        let qubos = ks.into_iter().zip(built).map(|(k, q)| q.map(|q| (k, q))).collect::<Result<_, _>>()?;
        Ok(Self { qubos })
    }
}

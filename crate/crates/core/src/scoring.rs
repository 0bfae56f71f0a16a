//! Figures of merit for equal-weighted portfolios.
//!
//! For a selection of `m` assets with weight `1/m` each:
//!
//! ```text
//! E[R_w]   = (1/m) Σ_i r_i
//! Var(R_w) = (1/m²) Σ_i Σ_j cov_ij
//! CQNS     = Var(R_w) − E[R_w]^(2+α)      (lower is better)
//! CQR      = ((1/m) Σ_i Cov(r_i, r_m)) / σ(R_w)
//! ```
//!
//! `E^(2+α)` uses the sign-preserving power `sign(E)·|E|^(2+α)`, so a more
//! negative expected return always scores worse even for fractional α.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::MarketModel;
use crate::portfolio::Portfolio;

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("portfolio selects no assets")]
    EmptyPortfolio,
    #[error("portfolio has zero variance")]
    ZeroVariance,
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("mask covers {mask} assets but the model has {model}")]
    SizeMismatch { mask: usize, model: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub alpha: f64,
    /// Subtract the risk-free rate in the Sharpe numerator. With `false` the
    /// ratio is plain `E/σ`.
    pub sharpe_excess: bool,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, sharpe_excess: true }
    }
}

/// `sign(x)·|x|^q`. Integral exponents use repeated multiplication, so
/// `signed_power(x, 3.0)` is bitwise `x * x * x`.
pub fn signed_power(x: f64, q: f64) -> f64 {
    let a = x.abs();
    let mag = if q.fract() == 0.0 && (1.0..=64.0).contains(&q) {
        let mut r = a;
        for _ in 1..q as u32 {
            r *= a;
        }
        r
    } else {
        a.powf(q)
    };
    if x < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Raw selection sums from which every score is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub size: usize,
    pub sum_returns: f64,
    pub sum_cov: f64,
    pub sum_market_cov: f64,
}

impl Moments {
    pub fn of(p: &Portfolio, model: &MarketModel) -> Result<Self, ScoringError> {
        check_shape(p, model)?;
        let idx: Vec<usize> = p.indices().collect();
        if idx.is_empty() {
            return Err(ScoringError::EmptyPortfolio);
        }
        let mut sum_cov = 0.0;
        for &i in &idx {
            for &j in &idx {
                sum_cov += model.cov[(i, j)];
            }
        }
        Ok(Self {
            size: idx.len(),
            sum_returns: idx.iter().map(|&i| model.expected_returns[i]).sum(),
            sum_cov,
            sum_market_cov: idx.iter().map(|&i| model.market_cov[i]).sum(),
        })
    }

    #[inline]
    pub fn expected_return(&self) -> f64 {
        self.sum_returns / self.size as f64
    }

    #[inline]
    pub fn variance(&self) -> f64 {
        let m = self.size as f64;
        self.sum_cov / (m * m)
    }

    #[inline]
    pub fn cqns(&self, alpha: f64) -> f64 {
        cqns_from(self.variance(), self.expected_return(), alpha)
    }
}

#[inline]
pub fn cqns_from(variance: f64, expected_return: f64, alpha: f64) -> f64 {
    variance - signed_power(expected_return, 2.0 + alpha)
}

fn check_shape(p: &Portfolio, model: &MarketModel) -> Result<(), ScoringError> {
    if p.n() != model.n() {
        return Err(ScoringError::SizeMismatch { mask: p.n(), model: model.n() });
    }
    Ok(())
}

pub fn portfolio_return(p: &Portfolio, model: &MarketModel) -> Result<f64, ScoringError> {
    Moments::of(p, model).map(|m| m.expected_return())
}

pub fn portfolio_variance(p: &Portfolio, model: &MarketModel) -> Result<f64, ScoringError> {
    Moments::of(p, model).map(|m| m.variance())
}

pub fn cqns(p: &Portfolio, model: &MarketModel, alpha: f64) -> Result<f64, ScoringError> {
    if !(alpha > 0.0) {
        return Err(ScoringError::BadAlpha(alpha));
    }
    Moments::of(p, model).map(|m| m.cqns(alpha))
}

pub fn cqr(p: &Portfolio, model: &MarketModel) -> Result<f64, ScoringError> {
    let m = Moments::of(p, model)?;
    let var = m.variance();
    if !(var > 0.0) {
        return Err(ScoringError::ZeroVariance);
    }
    Ok((m.sum_market_cov / m.size as f64) / var.sqrt())
}

/// `(E − rf)/σ` with annual `E` and daily `σ`.
pub fn sharpe(p: &ScoredPortfolio, risk_free: f64) -> Result<f64, ScoringError> {
    sharpe_from(p.expected_return, p.stdev, risk_free)
}

pub fn sharpe_from(expected_return: f64, stdev: f64, risk_free: f64) -> Result<f64, ScoringError> {
    if !(stdev > 0.0) {
        return Err(ScoringError::ZeroVariance);
    }
    Ok((expected_return - risk_free) / stdev)
}

/// A portfolio with every derived figure attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPortfolio {
    pub portfolio: Portfolio,
    pub expected_return: f64,
    pub variance: f64,
    pub stdev: f64,
    pub cqns: f64,
    pub cqr: f64,
    pub sharpe: f64,
    pub alpha: f64,
}

impl ScoredPortfolio {
    pub fn score(p: &Portfolio, model: &MarketModel, params: &ScoreParams) -> Result<Self, ScoringError> {
        if !(params.alpha > 0.0) {
            return Err(ScoringError::BadAlpha(params.alpha));
        }
        let m = Moments::of(p, model)?;
        let expected_return = m.expected_return();
        let variance = m.variance();
        if !(variance > 0.0) {
            return Err(ScoringError::ZeroVariance);
        }
        let stdev = variance.sqrt();
        let rf = if params.sharpe_excess { model.risk_free } else { 0.0 };
        Ok(Self {
            portfolio: p.clone(),
            expected_return,
            variance,
            stdev,
            cqns: cqns_from(variance, expected_return, params.alpha),
            cqr: (m.sum_market_cov / m.size as f64) / stdev,
            sharpe: sharpe_from(expected_return, stdev, rf)?,
            alpha: params.alpha,
        })
    }

    pub fn size(&self) -> usize {
        self.portfolio.size()
    }
}

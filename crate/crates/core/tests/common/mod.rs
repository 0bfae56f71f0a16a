//! Fixture loading and independent reference computations.
//!
//! Nothing here calls into the library's numerics: prices are parsed with
//! plain string splitting, covariances use the one-pass cross-product form,
//! betas come from a least-squares solve, and portfolio moments use an
//! explicit weight vector.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use cqns_core::market_data::{load_prices, MarketModel, ModelParams};
use cqns_core::Portfolio;
use nalgebra::{DMatrix, DVector};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn model(name: &str) -> MarketModel {
    let u = load_prices(fixture(name), "MKT").expect("fixture loads");
    MarketModel::from_universe(&u, &ModelParams::default()).expect("fixture models")
}

/// Closing prices per ticker on the common date set, tickers sorted.
pub struct RawPrices {
    pub tickers: Vec<String>,
    pub closes: Vec<Vec<f64>>,
    pub market: Vec<f64>,
}

pub fn raw_prices(name: &str) -> RawPrices {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let mut by: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        by.entry(f[1].trim().to_string()).or_default().insert(f[0].trim().to_string(), f[2].trim().parse().unwrap());
    }
    let market_rows = by.remove("MKT").unwrap();
    let mut dates: BTreeSet<String> = market_rows.keys().cloned().collect();
    for rows in by.values() {
        dates = dates.intersection(&rows.keys().cloned().collect()).cloned().collect();
    }
    let pick = |rows: &BTreeMap<String, f64>| dates.iter().map(|d| rows[d]).collect::<Vec<f64>>();
    RawPrices {
        tickers: by.keys().cloned().collect(),
        closes: by.values().map(pick).collect(),
        market: pick(&market_rows),
    }
}

pub fn simple_returns(p: &[f64]) -> Vec<f64> {
    p.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// `(Σxy − n·x̄·ȳ)/(n − 1)`.
pub fn cov_one_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (sxy - sx * sy / n) / (n - 1.0)
}

/// Slope of the least-squares line `y = a + b·x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let design = DMatrix::from_fn(x.len(), 2, |r, c| if c == 0 { 1.0 } else { x[r] });
    let sol = design.svd(true, true).solve(&DVector::from_column_slice(y), 1e-14).unwrap();
    sol[1]
}

/// Equal weights on the selected assets.
pub fn weights(p: &Portfolio) -> DVector<f64> {
    let m = p.size() as f64;
    DVector::from_iterator(p.n(), (0..p.n()).map(|i| if p.contains(i) { 1.0 / m } else { 0.0 }))
}

pub struct Reference {
    pub expected_return: f64,
    pub variance: f64,
    pub cqns: f64,
    pub cqr: f64,
}

/// Portfolio figures from `w'Σw`, `w·r` and `w·cov_m`.
pub fn reference(p: &Portfolio, m: &MarketModel, alpha: f64) -> Reference {
    let w = weights(p);
    let r = DVector::from_column_slice(&m.expected_returns);
    let mc = DVector::from_column_slice(&m.market_cov);
    let variance = (w.transpose() * &m.cov * &w)[(0, 0)];
    let e = w.dot(&r);
    let cube = e.signum() * e.abs().powf(2.0 + alpha);
    Reference { expected_return: e, variance, cqns: variance - cube, cqr: w.dot(&mc) / variance.sqrt() }
}

/// Plain `x'Qx` over a boolean vector.
pub fn quad_form(q: &DMatrix<f64>, bits: &[bool]) -> f64 {
    let x = DVector::from_iterator(bits.len(), bits.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    (x.transpose() * q * &x)[(0, 0)]
}

pub fn all_masks(n: usize) -> impl Iterator<Item = Portfolio> {
    (1u64..(1 << n)).map(move |b| Portfolio::from_u64(n, b))
}

pub fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

//! Price ingestion and the CAPM market model.
//!
//! Conventions:
//! - daily returns are simple returns `close[t+1] / close[t] - 1`;
//! - covariances use the unbiased divisor (observations − 1);
//! - expected returns are annual CAPM figures, while variances stay at daily
//!   scale. Portfolio σ is therefore a daily figure set against an annual
//!   return, which is what the Sharpe and CQNS numbers downstream assume.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Assets missing more than this fraction of the market's dates are rejected.
pub const MAX_MISSING_FRACTION: f64 = 0.10;

pub const DEFAULT_RISK_FREE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed price file: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad date {value:?} on row {row}")]
    BadDate { row: u64, value: String },
    #[error("market ticker {0:?} not present")]
    MissingMarket(String),
    #[error("universe needs at least 2 assets besides the market, found {0}")]
    ShortUniverse(usize),
    #[error("series {ticker} has {dates} aligned dates; at least 2 are required")]
    ShortHistory { ticker: String, dates: usize },
    #[error("non-positive close {close} for {ticker} on {date}")]
    NonPositivePrice { ticker: String, date: NaiveDate, close: f64 },
    #[error("duplicate row for {ticker} on {date}")]
    DuplicateRow { ticker: String, date: NaiveDate },
    #[error("duplicate ticker {0}")]
    DuplicateTicker(String),
    #[error("series {ticker}: dates are not strictly increasing")]
    UnorderedDates { ticker: String },
    #[error("series {ticker}: {dates} dates but {closes} closes")]
    LengthMismatch { ticker: String, dates: usize, closes: usize },
    #[error("{ticker} is missing {missing} of {total} market dates (limit {limit_pct}%)")]
    IncompleteHistory { ticker: String, missing: usize, total: usize, limit_pct: f64 },
    #[error("need at least 2 return observations, found {0}")]
    DegenerateHistory(usize),
    #[error("market variance is zero")]
    ZeroMarketVariance,
    #[error("asset index {index} out of range for {n} assets")]
    BadIndex { index: usize, n: usize },
    #[error("inconsistent model dimensions: {0}")]
    Shape(String),
}

/// Daily closing prices for one ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self, MarketDataError> {
        let ticker = ticker.into();
        if dates.len() != closes.len() {
            return Err(MarketDataError::LengthMismatch { ticker, dates: dates.len(), closes: closes.len() });
        }
        if dates.len() < 2 {
            return Err(MarketDataError::ShortHistory { ticker, dates: dates.len() });
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MarketDataError::UnorderedDates { ticker });
        }
        if let Some((d, c)) = dates.iter().zip(&closes).find(|(_, c)| !(**c > 0.0)) {
            return Err(MarketDataError::NonPositivePrice { ticker, date: *d, close: *c });
        }
        Ok(Self { ticker, dates, closes })
    }

    fn restrict_to(&self, keep: &BTreeSet<NaiveDate>) -> Self {
        let (dates, closes) =
            self.dates.iter().zip(&self.closes).filter(|(d, _)| keep.contains(d)).map(|(d, c)| (*d, *c)).unzip();
        Self { ticker: self.ticker.clone(), dates, closes }
    }

    /// Simple daily returns.
    pub fn returns(&self) -> Vec<f64> {
        self.closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

/// `N >= 2` assets and one market index, all on an identical date vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetUniverse {
    pub assets: Vec<PriceSeries>,
    pub market: PriceSeries,
    pub as_of: NaiveDate,
}

impl AssetUniverse {
    /// Aligns every series to the intersection of their dates and sorts the
    /// assets by ticker.
    pub fn new(mut assets: Vec<PriceSeries>, market: PriceSeries) -> Result<Self, MarketDataError> {
        if assets.len() < 2 {
            return Err(MarketDataError::ShortUniverse(assets.len()));
        }
        let mut seen = BTreeSet::new();
        for a in assets.iter().chain(std::iter::once(&market)) {
            if !seen.insert(a.ticker.as_str()) {
                return Err(MarketDataError::DuplicateTicker(a.ticker.clone()));
            }
        }
        assets.sort_by(|a, b| a.ticker.cmp(&b.ticker));

        let mut common: BTreeSet<NaiveDate> = market.dates.iter().copied().collect();
        for a in &assets {
            let own: BTreeSet<NaiveDate> = a.dates.iter().copied().collect();
            common = common.intersection(&own).copied().collect();
        }
        if common.len() < 2 {
            let short =
                assets.iter().find(|a| a.dates.iter().filter(|d| common.contains(d)).count() < 2).unwrap_or(&market);
            return Err(MarketDataError::ShortHistory { ticker: short.ticker.clone(), dates: common.len() });
        }

        let market_dates: BTreeSet<NaiveDate> = market.dates.iter().copied().collect();
        let total = market_dates.len();
        for a in &assets {
            let missing = market_dates.iter().filter(|d| a.dates.binary_search(d).is_err()).count();
            if missing as f64 > MAX_MISSING_FRACTION * total as f64 {
                return Err(MarketDataError::IncompleteHistory {
                    ticker: a.ticker.clone(),
                    missing,
                    total,
                    limit_pct: MAX_MISSING_FRACTION * 100.0,
                });
            }
        }

        let assets: Vec<_> = assets.iter().map(|a| a.restrict_to(&common)).collect();
        let market = market.restrict_to(&common);
        let as_of = *common.iter().next_back().expect("at least two common dates");
        Ok(Self { assets, market, as_of })
    }

    pub fn n(&self) -> usize {
        self.assets.len()
    }

    /// Number of aligned trading days `T`.
    pub fn t(&self) -> usize {
        self.market.dates.len()
    }

    pub fn tickers(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.ticker.clone()).collect()
    }
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    ticker: String,
    close: f64,
}

/// Reads a long-format `date,ticker,close` CSV and builds the aligned universe.
pub fn load_prices(path: impl AsRef<Path>, market_ticker: &str) -> Result<AssetUniverse, MarketDataError> {
    parse_prices(File::open(path)?, market_ticker)
}

pub fn parse_prices<R: Read>(reader: R, market_ticker: &str) -> Result<AssetUniverse, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut by_ticker: HashMap<String, BTreeMap<NaiveDate, f64>> = HashMap::new();
    for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|_| MarketDataError::BadDate { row: line, value: row.date.clone() })?;
        if !(row.close > 0.0) {
            return Err(MarketDataError::NonPositivePrice { ticker: row.ticker, date, close: row.close });
        }
        let series = by_ticker.entry(row.ticker.clone()).or_default();
        if series.insert(date, row.close).is_some() {
            return Err(MarketDataError::DuplicateRow { ticker: row.ticker, date });
        }
    }

    let market_rows =
        by_ticker.remove(market_ticker).ok_or_else(|| MarketDataError::MissingMarket(market_ticker.to_string()))?;
    let to_series = |ticker: String, rows: BTreeMap<NaiveDate, f64>| {
        let (dates, closes) = rows.into_iter().unzip();
        PriceSeries::new(ticker, dates, closes)
    };
    let market = to_series(market_ticker.to_string(), market_rows)?;
    let assets = by_ticker.into_iter().map(|(t, rows)| to_series(t, rows)).collect::<Result<Vec<_>, _>>()?;
    AssetUniverse::new(assets, market)
}

/// Per-asset simple daily returns, shape `N × (T−1)`.
pub fn compute_returns(universe: &AssetUniverse) -> Vec<Vec<f64>> {
    universe.assets.iter().map(PriceSeries::returns).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased two-pass sample covariance of two equally long series.
pub fn sample_covariance(x: &[f64], y: &[f64]) -> Result<f64, MarketDataError> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(MarketDataError::DegenerateHistory(n.min(y.len())));
    }
    let (mx, my) = (mean(x), mean(y));
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(s / (n - 1) as f64)
}

/// Sample covariance matrix of the return rows. Entries are computed once
/// for `i <= j` and mirrored, so the result is bitwise symmetric.
pub fn covariance_matrix(returns: &[Vec<f64>]) -> Result<DMatrix<f64>, MarketDataError> {
    let n = returns.len();
    let obs = returns.first().map_or(0, Vec::len);
    if obs < 2 {
        return Err(MarketDataError::DegenerateHistory(obs));
    }
    if returns.iter().any(|r| r.len() != obs) {
        return Err(MarketDataError::Shape("return rows differ in length".into()));
    }
    let means: Vec<f64> = returns.iter().map(|r| mean(r)).collect();
    let centered: Vec<Vec<f64>> = returns.iter().zip(&means).map(|(r, m)| r.iter().map(|v| v - m).collect()).collect();
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let c = s / (obs - 1) as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    Ok(cov)
}

/// `rf + β·(market_return − rf)`.
#[inline]
pub fn capm_expected_return(beta: f64, risk_free: f64, market_return: f64) -> f64 {
    risk_free + beta * (market_return - risk_free)
}

/// Options for [`MarketModel::from_universe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub risk_free: f64,
    /// Annual market return. `None` uses the market series' growth over the
    /// loaded window.
    pub market_return: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { risk_free: DEFAULT_RISK_FREE, market_return: None }
    }
}

/// Immutable market statistics shared by every scorer and solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub tickers: Vec<String>,
    /// `N × (T−1)` simple daily returns; empty for models built from moments.
    pub daily_returns: Vec<Vec<f64>>,
    pub cov: DMatrix<f64>,
    pub market_var: f64,
    /// Daily `Cov(r_i, r_m)`.
    pub market_cov: Vec<f64>,
    pub betas: Vec<f64>,
    /// Annual CAPM expected returns.
    pub expected_returns: Vec<f64>,
    pub market_return: f64,
    pub risk_free: f64,
}

impl MarketModel {
    pub fn from_universe(universe: &AssetUniverse, params: &ModelParams) -> Result<Self, MarketDataError> {
        let daily_returns = compute_returns(universe);
        let market_returns = universe.market.returns();
        let cov = covariance_matrix(&daily_returns)?;
        let market_var = sample_covariance(&market_returns, &market_returns)?;
        let market_cov =
            daily_returns.iter().map(|r| sample_covariance(r, &market_returns)).collect::<Result<Vec<_>, _>>()?;
        let market_return = params.market_return.unwrap_or_else(|| {
            let c = &universe.market.closes;
            c[c.len() - 1] / c[0] - 1.0
        });
        let mut model =
            Self::from_moments(universe.tickers(), cov, market_cov, market_var, params.risk_free, market_return)?;
        model.daily_returns = daily_returns;
        Ok(model)
    }

    /// Builds a model directly from second moments. Betas and expected
    /// returns are derived, so the CAPM invariants hold by construction.
    pub fn from_moments(
        tickers: Vec<String>,
        cov: DMatrix<f64>,
        market_cov: Vec<f64>,
        market_var: f64,
        risk_free: f64,
        market_return: f64,
    ) -> Result<Self, MarketDataError> {
        let n = tickers.len();
        if cov.nrows() != n || cov.ncols() != n || market_cov.len() != n {
            return Err(MarketDataError::Shape(format!(
                "{n} tickers, cov {}x{}, market_cov {}",
                cov.nrows(),
                cov.ncols(),
                market_cov.len()
            )));
        }
        if (0..n).any(|i| (0..i).any(|j| cov[(i, j)] != cov[(j, i)])) {
            return Err(MarketDataError::Shape("covariance matrix is not symmetric".into()));
        }
        if !(market_var > 0.0) {
            return Err(MarketDataError::ZeroMarketVariance);
        }
        let betas: Vec<f64> = market_cov.iter().map(|c| c / market_var).collect();
        let expected_returns = betas.iter().map(|&b| capm_expected_return(b, risk_free, market_return)).collect();
        Ok(Self {
            tickers,
            daily_returns: Vec::new(),
            cov,
            market_var,
            market_cov,
            betas,
            expected_returns,
            market_return,
            risk_free,
        })
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    /// `Cov(r_i, r_m) / Var(r_m)` for one asset.
    pub fn beta(&self, asset: usize) -> Result<f64, MarketDataError> {
        if asset >= self.n() {
            return Err(MarketDataError::BadIndex { index: asset, n: self.n() });
        }
        if !(self.market_var > 0.0) {
            return Err(MarketDataError::ZeroMarketVariance);
        }
        Ok(self.market_cov[asset] / self.market_var)
    }

    /// Sub-universe restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, MarketDataError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(MarketDataError::BadIndex { index: bad, n: self.n() });
        }
        let k = indices.len();
        let cov = DMatrix::from_fn(k, k, |a, b| self.cov[(indices[a], indices[b])]);
        Ok(Self {
            tickers: indices.iter().map(|&i| self.tickers[i].clone()).collect(),
            daily_returns: if self.daily_returns.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.daily_returns[i].clone()).collect()
            },
            cov,
            market_var: self.market_var,
            market_cov: indices.iter().map(|&i| self.market_cov[i]).collect(),
            betas: indices.iter().map(|&i| self.betas[i]).collect(),
            expected_returns: indices.iter().map(|&i| self.expected_returns[i]).collect(),
            market_return: self.market_return,
            risk_free: self.risk_free,
        })
    }

    /// Relabels assets so that old asset `i` becomes new asset `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, MarketDataError> {
        let mut inverse = vec![usize::MAX; self.n()];
        for (old, &new) in perm.iter().enumerate() {
            if new >= self.n() || inverse[new] != usize::MAX {
                return Err(MarketDataError::Shape("not a permutation".into()));
            }
            inverse[new] = old;
        }
        self.subset(&inverse)
    }

    /// Smallest eigenvalue of the covariance matrix.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.cov.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// SHA-256 over the model's numeric content, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tickers {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        let mut put = |x: f64| h.update(x.to_le_bytes());
        self.cov.iter().copied().for_each(&mut put);
        self.market_cov.iter().copied().for_each(&mut put);
        self.expected_returns.iter().copied().for_each(&mut put);
        put(self.market_var);
        put(self.market_return);
        put(self.risk_free);
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn days(n: usize) -> Vec<NaiveDate> {
        (0..n).map(|i| d("2020-01-01") + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let s = PriceSeries::new("A", days(3), vec![100.0, 100.0, 100.0]).unwrap();
        assert_eq!(s.returns(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_step_return() {
        let s = PriceSeries::new("A", days(2), vec![100.0, 110.0]).unwrap();
        let r = s.returns();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 0.10).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_give_constant_covariance() {
        let x = vec![0.01, -0.02, 0.03, 0.005];
        let cov = covariance_matrix(&[x.clone(), x]).unwrap();
        let v = cov[(0, 0)];
        assert!(cov.iter().all(|c| *c == v));
    }

    #[test]
    fn anti_correlated_rows() {
        let x = vec![0.01, -0.02, 0.03, 0.005];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let cov = covariance_matrix(&[x, neg]).unwrap();
        assert!((cov[(0, 1)] + cov[(0, 0)]).abs() < 1e-18);
        assert_eq!(cov[(0, 1)], cov[(1, 0)]);
    }

    #[test]
    fn covariance_needs_two_observations() {
        assert!(matches!(covariance_matrix(&[vec![0.1], vec![0.2]]), Err(MarketDataError::DegenerateHistory(1))));
    }

    #[test]
    fn capm_limits() {
        assert_eq!(capm_expected_return(1.0, 0.03, 0.12), 0.12);
        assert_eq!(capm_expected_return(0.0, 0.03, 0.12), 0.03);
        assert!((capm_expected_return(1.1983, 0.01, 0.1860) - 0.2209).abs() < 5e-5);
        // affine in beta: doubling beta doubles the excess return
        let e1 = capm_expected_return(0.7, 0.01, 0.186) - 0.01;
        let e2 = capm_expected_return(1.4, 0.01, 0.186) - 0.01;
        assert!((2.0 * e1 - e2).abs() < 1e-15);
    }

    fn tiny_universe() -> AssetUniverse {
        let m = PriceSeries::new("MKT", days(5), vec![100.0, 101.0, 99.0, 102.0, 103.0]).unwrap();
        let same = PriceSeries::new("COPY", days(5), m.closes.clone()).unwrap();
        let flat = PriceSeries::new("FLAT", days(5), vec![50.0; 5]).unwrap();
        AssetUniverse::new(vec![same, flat], m).unwrap()
    }

    #[test]
    fn market_copy_has_unit_beta_and_flat_asset_zero_beta() {
        let u = tiny_universe();
        let model = MarketModel::from_universe(&u, &ModelParams::default()).unwrap();
        assert_eq!(model.tickers, vec!["COPY", "FLAT"]);
        assert!((model.beta(0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(model.beta(1).unwrap(), 0.0);
        assert_eq!(model.expected_returns[1], model.risk_free);
        assert!((model.expected_returns[0] - model.market_return).abs() < 1e-15);
    }

    #[test]
    fn alignment_is_idempotent() {
        let u = tiny_universe();
        let again = AssetUniverse::new(u.assets.clone(), u.market.clone()).unwrap();
        assert_eq!(u, again);
    }

    #[test]
    fn market_return_override() {
        let u = tiny_universe();
        let params = ModelParams { risk_free: 0.01, market_return: Some(0.186) };
        let model = MarketModel::from_universe(&u, &params).unwrap();
        assert_eq!(model.market_return, 0.186);
        let computed = MarketModel::from_universe(&u, &ModelParams::default()).unwrap();
        assert!((computed.market_return - 0.03).abs() < 1e-12);
    }

    #[test]
    fn csv_errors() {
        let only_market = "date,ticker,close\n2020-01-01,MKT,1\n2020-01-02,MKT,2\n";
        assert!(matches!(parse_prices(only_market.as_bytes(), "MKT"), Err(MarketDataError::ShortUniverse(0))));

        let no_market = "date,ticker,close\n2020-01-01,A,1\n2020-01-02,A,2\n";
        assert!(matches!(parse_prices(no_market.as_bytes(), "MKT"), Err(MarketDataError::MissingMarket(_))));

        let dup = "date,ticker,close\n2020-01-01,A,1\n2020-01-01,A,2\n";
        assert!(matches!(parse_prices(dup.as_bytes(), "MKT"), Err(MarketDataError::DuplicateRow { .. })));

        let neg = "date,ticker,close\n2020-01-01,A,-1\n";
        assert!(matches!(parse_prices(neg.as_bytes(), "MKT"), Err(MarketDataError::NonPositivePrice { .. })));

        let one_shared = "date,ticker,close\n\
            2020-01-01,MKT,1\n2020-01-02,MKT,2\n2020-01-03,MKT,3\n\
            2020-01-01,A,1\n2020-01-02,A,2\n\
            2020-01-02,B,1\n2020-01-03,B,2\n";
        assert!(matches!(parse_prices(one_shared.as_bytes(), "MKT"), Err(MarketDataError::ShortHistory { .. })));
    }

    #[test]
    fn sparse_assets_are_rejected() {
        let mut rows = String::from("date,ticker,close\n");
        for (i, day) in days(20).iter().enumerate() {
            rows += &format!("{day},MKT,{}\n{day},A,{}\n", 100 + i, 50 + i);
            // B misses 3 of 20 market dates (15%)
            if i % 7 != 3 {
                rows += &format!("{day},B,{}\n", 10 + i);
            }
        }
        assert!(matches!(
            parse_prices(rows.as_bytes(), "MKT"),
            Err(MarketDataError::IncompleteHistory { missing: 3, total: 20, .. })
        ));
    }

    #[test]
    fn rows_in_any_order_are_aligned() {
        let text = "date,ticker,close\n\
            2020-01-03,B,3\n2020-01-01,MKT,1\n2020-01-02,A,2\n2020-01-03,MKT,3\n\
            2020-01-01,A,1\n2020-01-02,MKT,2\n2020-01-03,A,4\n2020-01-01,B,1\n2020-01-02,B,2\n";
        let u = parse_prices(text.as_bytes(), "MKT").unwrap();
        assert_eq!(u.tickers(), vec!["A", "B"]);
        assert_eq!(u.t(), 3);
        assert_eq!(u.assets[0].closes, vec![1.0, 2.0, 4.0]);
        assert_eq!(u.as_of, d("2020-01-03"));
    }

    #[test]
    fn permutation_round_trip() {
        let u = tiny_universe();
        let model = MarketModel::from_universe(&u, &ModelParams::default()).unwrap();
        let p = model.permuted(&[1, 0]).unwrap();
        assert_eq!(p.tickers, vec!["FLAT", "COPY"]);
        assert_eq!(p.permuted(&[1, 0]).unwrap(), model);
    }
}

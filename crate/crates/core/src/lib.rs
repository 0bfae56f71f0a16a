//! Cardinality-constrained portfolio selection.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`market_data`] turns aligned daily closes into a CAPM [`MarketModel`].
//! 2. [`scoring`] evaluates equal-weighted selections: expected return,
//!    variance, CQNS, CQR and Sharpe.
//! 3. [`qubo`] builds one QUBO per target portfolio size, bends it with a
//!    quadratic cardinality penalty, scales it into annealer range and
//!    converts it to Ising form.
//! 4. [`solvers`] searches either the exact CQNS landscape or the QUBOs with
//!    exhaustive enumeration, fat-tailed Monte Carlo, two simulated
//!    annealers, a genetic algorithm and tabu search.
//! 5. [`harness`] runs multi-solver campaigns, deduplicates valid portfolios
//!    and writes frontier, landscape and comparison reports.
//!
//! With the default `parallel` feature the data-parallel loops (enumeration
//! chunks, Monte Carlo batches, restarts, per-size QUBO construction) run on
//! rayon. Without it every loop runs sequentially and produces identical
//! output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod market_data;
pub mod numfmt;
pub mod par;
pub mod portfolio;
pub mod qubo;
pub mod scoring;
pub mod seed;
pub mod solvers;

pub use market_data::{AssetUniverse, MarketDataError, MarketModel, PriceSeries};
pub use portfolio::{Portfolio, PortfolioParseError};
pub use scoring::{ScoreParams, ScoredPortfolio, ScoringError};

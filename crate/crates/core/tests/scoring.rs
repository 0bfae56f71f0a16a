mod common;

use approx::assert_abs_diff_eq;
use common::{all_masks, model, reference};
use cqns_core::scoring::{
    cqns, cqr, portfolio_return, portfolio_variance, sharpe, sharpe_from, signed_power, ScoreParams,
};
use cqns_core::solvers::{exhaustive_best, CqnsObjective, FlipObjective};
use cqns_core::{MarketModel, Portfolio, ScoredPortfolio, ScoringError};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn two_asset(v: f64, c: f64, mc: [f64; 2], rf: f64, mr: f64) -> MarketModel {
    let cov = DMatrix::from_row_slice(2, 2, &[v, c, c, v]);
    MarketModel::from_moments(vec!["A".into(), "B".into()], cov, mc.to_vec(), 1.0, rf, mr).unwrap()
}

#[test]
fn single_asset_closed_forms() {
    let m = model("synth12.csv");
    for i in 0..12 {
        let p = Portfolio::from_indices(12, [i]);
        assert_eq!(portfolio_return(&p, &m).unwrap(), m.expected_returns[i]);
        assert_eq!(portfolio_variance(&p, &m).unwrap(), m.cov[(i, i)]);
        assert_eq!(cqr(&p, &m).unwrap(), m.market_cov[i] / m.cov[(i, i)].sqrt());
    }
}

#[test]
fn one_asset_cqns_example() {
    let cov = DMatrix::from_row_slice(2, 2, &[0.0004, 0.0, 0.0, 0.0004]);
    // beta 0.2 with rf 0 and market 1 gives E = 0.2
    let m = MarketModel::from_moments(vec!["A".into(), "B".into()], cov, vec![0.2, 0.2], 1.0, 0.0, 1.0).unwrap();
    let p = Portfolio::from_indices(2, [0]);
    assert_abs_diff_eq!(cqns(&p, &m, 1.0).unwrap(), -0.0076, epsilon = 1e-15);
}

#[test]
fn midpoint_and_diversification() {
    let m = two_asset(0.0004, 0.0, [0.1, 0.3], 0.0, 1.0);
    let both = Portfolio::full(2);
    assert_abs_diff_eq!(portfolio_return(&both, &m).unwrap(), 0.2, epsilon = 1e-15);
    assert_eq!(portfolio_variance(&both, &m).unwrap(), 0.0002);
}

#[test]
fn zero_return_cqns_is_variance() {
    let m = two_asset(0.0004, 0.0001, [0.0, 0.0], 0.0, 1.0);
    let p = Portfolio::full(2);
    assert_eq!(cqns(&p, &m, 1.0).unwrap(), portfolio_variance(&p, &m).unwrap());
    assert_eq!(cqr(&p, &m).unwrap(), 0.0);
}

#[test]
fn full_mask_return_is_mean() {
    let m = model("synth60.csv");
    let mean = m.expected_returns.iter().sum::<f64>() / 60.0;
    assert_abs_diff_eq!(portfolio_return(&Portfolio::full(60), &m).unwrap(), mean, epsilon = 1e-15);
}

#[test]
fn first_ten_match_quadratic_form() {
    let m = model("synth60.csv");
    let p = Portfolio::from_indices(60, 0..10);
    let r = reference(&p, &m, 1.0);
    assert_abs_diff_eq!(portfolio_variance(&p, &m).unwrap(), r.variance, epsilon = 1e-12);
    assert_abs_diff_eq!(cqr(&p, &m).unwrap(), r.cqr, epsilon = 1e-12);
    assert_abs_diff_eq!(cqns(&p, &m, 1.0).unwrap(), r.cqns, epsilon = 1e-12);
}

#[test]
fn empty_portfolio_unscorable() {
    let m = model("tiny4.csv");
    let e = Portfolio::empty(4);
    assert!(matches!(cqns(&e, &m, 1.0), Err(ScoringError::EmptyPortfolio)));
    assert!(matches!(portfolio_return(&e, &m), Err(ScoringError::EmptyPortfolio)));
    assert!(matches!(cqr(&e, &m), Err(ScoringError::EmptyPortfolio)));
}

#[test]
fn zero_variance_has_no_cqr() {
    let m = two_asset(0.0, 0.0, [0.0, 0.0], 0.0, 1.0);
    assert!(matches!(cqr(&Portfolio::full(2), &m), Err(ScoringError::ZeroVariance)));
}

#[test]
fn sharpe_examples() {
    assert_abs_diff_eq!(sharpe_from(0.11, 0.05, 0.01).unwrap(), 2.0, epsilon = 1e-12);
    assert_eq!(sharpe_from(0.05, 0.02, 0.05).unwrap(), 0.0);
    assert_abs_diff_eq!(sharpe_from(0.2209, 0.0248, 0.0).unwrap(), 8.907, epsilon = 1e-3);
    assert!(sharpe_from(0.1, 0.0, 0.0).is_err());
}

#[test]
fn sharpe_convention_flag() {
    let m = model("synth12.csv");
    let p = Portfolio::from_indices(12, [1, 4, 9]);
    let excess = ScoredPortfolio::score(&p, &m, &ScoreParams { alpha: 1.0, sharpe_excess: true }).unwrap();
    let plain = ScoredPortfolio::score(&p, &m, &ScoreParams { alpha: 1.0, sharpe_excess: false }).unwrap();
    assert_eq!(excess.sharpe, sharpe(&excess, m.risk_free).unwrap());
    assert_eq!(plain.sharpe, plain.expected_return / plain.stdev);
    assert_eq!(excess.stdev, excess.variance.sqrt());
}

#[test]
fn cube_is_exact() {
    for x in [0.2209, -0.13, 1e-3, 7.5, 0.0] {
        assert_eq!(signed_power(x, 3.0).to_bits(), (x * x * x).to_bits());
    }
    assert!(signed_power(-0.5, 2.5) < 0.0);
    assert!(signed_power(-0.5, 2.5) < signed_power(-0.4, 2.5));
}

#[test]
fn added_orphan_asset_follows_closed_form() {
    let base = model("synth12.csv");
    let n = 13;
    let cov = DMatrix::from_fn(n, n, |i, j| if i < 12 && j < 12 { base.cov[(i, j)] } else { 0.0 });
    let mut mc = base.market_cov.clone();
    // market_cov making the CAPM return exactly zero for the orphan
    let beta0 = -base.risk_free / (base.market_return - base.risk_free);
    mc.push(beta0 * base.market_var);
    let tickers = (0..n).map(|i| format!("T{i}")).collect();
    let m = MarketModel::from_moments(tickers, cov, mc, base.market_var, base.risk_free, base.market_return).unwrap();
    let p = Portfolio::from_indices(n, [0, 2, 5]);
    let mut q = p.clone();
    q.insert(12);
    let v = portfolio_variance(&p, &m).unwrap();
    assert_abs_diff_eq!(portfolio_variance(&q, &m).unwrap(), v * 9.0 / 16.0, epsilon = 1e-18);
}

#[test]
fn incremental_matches_direct_on_all_masks() {
    let m = model("synth12.csv");
    let obj = CqnsObjective::new(&m, 1.0);
    let mut st = obj.init(&Portfolio::empty(12));
    let mut mask = Portfolio::empty(12);
    for step in 1u32..(1 << 12) {
        let i = step.trailing_zeros() as usize;
        obj.flip(&mut st, i);
        mask.flip(i);
        if !mask.is_empty() {
            assert_abs_diff_eq!(obj.value(&st), cqns(&mask, &m, 1.0).unwrap(), epsilon = 1e-10);
        }
    }
}

#[test]
fn exhaustive_best_matches_brute_force() {
    let m = model("synth12.csv");
    let best = exhaustive_best(&m, 1.0, 24).unwrap();
    let brute = all_masks(12).map(|p| (cqns(&p, &m, 1.0).unwrap(), p)).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    assert_eq!(best.overall.mask, brute.1);
    assert_eq!(best.overall.value.to_bits(), brute.0.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relabeling_preserves_scores(bits in 1u64..4096, rot in 0usize..12) {
        let m = model("synth12.csv");
        let perm: Vec<usize> = (0..12).map(|i| (i + rot) % 12).collect();
        let pm = m.permuted(&perm).unwrap();
        let p = Portfolio::from_u64(12, bits);
        let q = p.permuted(&perm);
        let a = ScoredPortfolio::score(&p, &m, &ScoreParams::default()).unwrap();
        let b = ScoredPortfolio::score(&q, &pm, &ScoreParams::default()).unwrap();
        prop_assert!((a.cqns - b.cqns).abs() < 1e-15);
        prop_assert!((a.cqr - b.cqr).abs() < 1e-12);
        prop_assert!((a.expected_return - b.expected_return).abs() < 1e-15);
    }
}

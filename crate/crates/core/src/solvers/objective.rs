//! Objectives with O(1) flip deltas and O(N) flip updates.

use nalgebra::DMatrix;

use crate::market_data::MarketModel;
use crate::portfolio::Portfolio;
use crate::qubo::{qubo_energy, ScaledQubo};
use crate::scoring::{cqns_from, Moments};

/// An objective over masks that supports single-bit-flip local search.
///
/// `value` is `+∞` for masks the objective cannot score (the empty
/// portfolio under CQNS), so Metropolis-style rules never move there.
pub trait FlipObjective: Sync {
    type State: Clone + Send;

    fn n(&self) -> usize;
    fn init(&self, mask: &Portfolio) -> Self::State;
    fn value(&self, st: &Self::State) -> f64;
    /// `value(after flipping i) − value(now)`.
    fn delta(&self, st: &Self::State, i: usize) -> f64;
    fn flip(&self, st: &mut Self::State, i: usize);
    fn is_set(&self, st: &Self::State, i: usize) -> bool;
    fn size(&self, st: &Self::State) -> usize;
    /// Direct, non-incremental evaluation.
    fn evaluate(&self, mask: &Portfolio) -> f64;
    /// Target size for QUBO objectives; `None` for unconstrained search.
    fn target_size(&self) -> Option<usize>;

    fn mask(&self, st: &Self::State) -> Portfolio {
        Portfolio::from_indices(self.n(), (0..self.n()).filter(|&i| self.is_set(st, i)))
    }
}

#[inline]
fn step(from: f64, to: f64) -> f64 {
    if to == f64::INFINITY {
        f64::INFINITY
    } else if from == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        to - from
    }
}

/// Exact CQNS of the selection.
#[derive(Debug, Clone, Copy)]
pub struct CqnsObjective<'a> {
    pub model: &'a MarketModel,
    pub alpha: f64,
}

impl<'a> CqnsObjective<'a> {
    pub fn new(model: &'a MarketModel, alpha: f64) -> Self {
        Self { model, alpha }
    }

    fn value_of(&self, m: usize, sum_r: f64, sum_cov: f64) -> f64 {
        if m == 0 {
            return f64::INFINITY;
        }
        let mf = m as f64;
        cqns_from(sum_cov / (mf * mf), sum_r / mf, self.alpha)
    }

    fn moved(&self, st: &CqnsState, i: usize) -> (usize, f64, f64) {
        let c_ii = self.model.cov[(i, i)];
        let r_i = self.model.expected_returns[i];
        if st.bits[i] {
            (st.m - 1, st.sum_r - r_i, st.sum_cov - 2.0 * st.cross[i] + c_ii)
        } else {
            (st.m + 1, st.sum_r + r_i, st.sum_cov + 2.0 * st.cross[i] + c_ii)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CqnsState {
    pub bits: Vec<bool>,
    pub m: usize,
    pub sum_r: f64,
    pub sum_cov: f64,
    /// `cross[j] = Σ_{i selected} cov_ij`
    pub cross: Vec<f64>,
}

impl FlipObjective for CqnsObjective<'_> {
    type State = CqnsState;

    fn n(&self) -> usize {
        self.model.n()
    }

    fn init(&self, mask: &Portfolio) -> CqnsState {
        let n = self.n();
        let mut st = CqnsState { bits: vec![false; n], m: 0, sum_r: 0.0, sum_cov: 0.0, cross: vec![0.0; n] };
        for i in mask.indices() {
            self.flip(&mut st, i);
        }
        st
    }

    fn value(&self, st: &CqnsState) -> f64 {
        self.value_of(st.m, st.sum_r, st.sum_cov)
    }

    fn delta(&self, st: &CqnsState, i: usize) -> f64 {
        let (m, r, c) = self.moved(st, i);
        step(self.value(st), self.value_of(m, r, c))
    }

    fn flip(&self, st: &mut CqnsState, i: usize) {
        let (m, r, c) = self.moved(st, i);
        let sign = if st.bits[i] { -1.0 } else { 1.0 };
        st.m = m;
        st.sum_r = r;
        st.sum_cov = c;
        st.bits[i] = !st.bits[i];
        let col = self.model.cov.column(i);
        for (x, c) in st.cross.iter_mut().zip(col.iter()) {
            *x += sign * c;
        }
    }

    fn is_set(&self, st: &CqnsState, i: usize) -> bool {
        st.bits[i]
    }

    fn size(&self, st: &CqnsState) -> usize {
        st.m
    }

    fn evaluate(&self, mask: &Portfolio) -> f64 {
        Moments::of(mask, self.model).map_or(f64::INFINITY, |m| m.cqns(self.alpha))
    }

    fn target_size(&self) -> Option<usize> {
        None
    }
}

/// `x'Qx` for a symmetric coefficient matrix.
#[derive(Debug, Clone, Copy)]
pub struct QuboObjective<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub target: Option<usize>,
}

impl<'a> QuboObjective<'a> {
    pub fn new(matrix: &'a DMatrix<f64>, target: Option<usize>) -> Self {
        Self { matrix, target }
    }

    pub fn scaled(q: &'a ScaledQubo) -> Self {
        Self { matrix: &q.matrix, target: Some(q.target_size) }
    }

    #[inline]
    fn gain(&self, st: &QuboState, i: usize) -> f64 {
        let g = self.matrix[(i, i)] + 2.0 * st.field[i];
        if st.bits[i] {
            -g
        } else {
            g
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuboState {
    pub bits: Vec<bool>,
    pub m: usize,
    pub energy: f64,
    /// `field[i] = Σ_{j selected, j≠i} q_ij`
    pub field: Vec<f64>,
}

impl FlipObjective for QuboObjective<'_> {
    type State = QuboState;

    fn n(&self) -> usize {
        self.matrix.nrows()
    }

    fn init(&self, mask: &Portfolio) -> QuboState {
        let n = self.n();
        let mut st = QuboState { bits: vec![false; n], m: 0, energy: 0.0, field: vec![0.0; n] };
        for i in mask.indices() {
            self.flip(&mut st, i);
        }
        st.energy = qubo_energy(self.matrix, mask);
        st
    }

    fn value(&self, st: &QuboState) -> f64 {
        st.energy
    }

    fn delta(&self, st: &QuboState, i: usize) -> f64 {
        self.gain(st, i)
    }

    fn flip(&self, st: &mut QuboState, i: usize) {
        let d = self.gain(st, i);
        let sign = if st.bits[i] { -1.0 } else { 1.0 };
        st.energy += d;
        st.bits[i] = !st.bits[i];
        if st.bits[i] {
            st.m += 1;
        } else {
            st.m -= 1;
        }
        let col = self.matrix.column(i);
        for (j, (f, q)) in st.field.iter_mut().zip(col.iter()).enumerate() {
            if j != i {
                *f += sign * q;
            }
        }
    }

    fn is_set(&self, st: &QuboState, i: usize) -> bool {
        st.bits[i]
    }

    fn size(&self, st: &QuboState) -> usize {
        st.m
    }

    fn evaluate(&self, mask: &Portfolio) -> f64 {
        qubo_energy(self.matrix, mask)
    }

    fn target_size(&self) -> Option<usize> {
        self.target
    }
}

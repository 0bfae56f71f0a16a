//! QUBO → Ising conversion with annealer range checks.
//!
//! Substituting `x_i = (s_i + 1)/2` into `Σ_ij q_ij x_i x_j` (symmetric `q`)
//! gives
//!
//! ```text
//! h_i    = (q_ii + Σ_{j≠i} q_ij) / 2
//! J_ij   = q_ij / 2                       (i < j)
//! offset = (Σ_i q_ii + Σ_{i<j} q_ij) / 2
//! ```
//!
//! so that `Σ h_i s_i + Σ_{i<j} J_ij s_i s_j + offset` equals the QUBO energy.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ScaledQubo;

/// Accepted linear field range.
pub const H_RANGE: (f64, f64) = (-2.0, 2.0);
/// Accepted coupling range.
pub const J_RANGE: (f64, f64) = (-0.9, 0.9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingModel {
    pub h: Vec<f64>,
    /// Couplings keyed by `(i, j)` with `i < j`.
    pub j: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl IsingModel {
    /// `Σ h_i s_i + Σ J_ij s_i s_j` for spins in `{−1, +1}` (offset excluded).
    pub fn energy(&self, spins: &[i8]) -> f64 {
        let lin: f64 = self.h.iter().zip(spins).map(|(h, &s)| h * s as f64).sum();
        let quad: f64 = self.j.iter().map(|(&(a, b), j)| j * (spins[a] * spins[b]) as f64).sum();
        lin + quad
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct RangeViolation {
    /// `(i, h_i)` outside [`H_RANGE`].
    pub fields: Vec<(usize, f64)>,
    /// `(i, j, J_ij)` outside [`J_RANGE`].
    pub couplings: Vec<(usize, usize, f64)>,
}

impl fmt::Display for RangeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ising coefficients out of range:")?;
        for (i, h) in self.fields.iter().take(8) {
            write!(f, " h[{i}]={h}")?;
        }
        for (i, j, v) in self.couplings.iter().take(8) {
            write!(f, " J[{i},{j}]={v}")?;
        }
        let more = (self.fields.len() + self.couplings.len()).saturating_sub(16);
        if more > 0 {
            write!(f, " (+{more} more)")?;
        }
        Ok(())
    }
}

pub fn ising_from_matrix(q: &DMatrix<f64>) -> IsingModel {
    let n = q.nrows();
    let mut h = vec![0.0; n];
    let mut j = BTreeMap::new();
    let mut offset = 0.0;
    for a in 0..n {
        let qaa = q[(a, a)];
        h[a] += qaa / 2.0;
        offset += qaa / 2.0;
        for b in a + 1..n {
            let qab = q[(a, b)];
            if qab != 0.0 {
                j.insert((a, b), qab / 2.0);
            }
            h[a] += qab / 2.0;
            h[b] += qab / 2.0;
            offset += qab / 2.0;
        }
    }
    IsingModel { h, j, offset }
}

pub fn validate_ranges(model: &IsingModel) -> Result<(), RangeViolation> {
    let inside = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
    let fields: Vec<_> = model.h.iter().copied().enumerate().filter(|(_, h)| !inside(*h, H_RANGE)).collect();
    let couplings: Vec<_> =
        model.j.iter().filter(|(_, v)| !inside(**v, J_RANGE)).map(|(&(a, b), &v)| (a, b, v)).collect();
    if fields.is_empty() && couplings.is_empty() {
        Ok(())
    } else {
        Err(RangeViolation { fields, couplings })
    }
}

/// Converts and checks the annealer ranges.
pub fn to_ising(q: &ScaledQubo) -> Result<IsingModel, RangeViolation> {
    let model = ising_from_matrix(&q.matrix);
    validate_ranges(&model)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_variable() {
        let m = ising_from_matrix(&DMatrix::from_element(1, 1, 0.9));
        assert_eq!(m.h, vec![0.45]);
        assert_eq!(m.offset, 0.45);
        assert!(m.j.is_empty());
        // x = 1 ↔ s = +1
        assert!((m.energy(&[1]) + m.offset - 0.9).abs() < 1e-15);
        assert!((m.energy(&[-1]) + m.offset).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        let m = ising_from_matrix(&DMatrix::zeros(3, 3));
        assert!(m.h.iter().all(|h| *h == 0.0));
        assert!(m.j.is_empty());
        assert_eq!(m.offset, 0.0);
        assert!(validate_ranges(&m).is_ok());
    }

    #[test]
    fn violation_names_indices() {
        let mut q = DMatrix::zeros(3, 3);
        q[(1, 2)] = 2.0;
        q[(2, 1)] = 2.0;
        q[(0, 0)] = 5.0;
        let err = validate_ranges(&ising_from_matrix(&q)).unwrap_err();
        assert_eq!(err.fields, vec![(0, 2.5)]);
        assert_eq!(err.couplings, vec![(1, 2, 1.0)]);
        let text = err.to_string();
        assert!(text.contains("h[0]") && text.contains("J[1,2]"), "{text}");
    }
}

//! JSON interchange for scaled QUBOs.
//!
//! Entries are upper-triangular `(i, j, value)` triplets with `i <= j`; an
//! off-diagonal value is the sum of both symmetric entries, so the energy of
//! a mask is `Σ_{i<=j} value·x_i·x_j` with no double counting. Floats are
//! written with 17 significant digits and re-import is bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{QuboError, ScaledQubo, ShiftParams};
use crate::numfmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftExport {
    pub lin: f64,
    pub quad: f64,
    pub end_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboExportMeta {
    pub seed: u64,
    pub model_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboExport {
    pub n: usize,
    pub target_size: usize,
    pub scale: f64,
    pub shift: ShiftExport,
    pub entries: Vec<(usize, usize, f64)>,
    pub metadata: QuboExportMeta,
}

impl QuboExport {
    pub fn from_qubo(q: &ScaledQubo, meta: QuboExportMeta) -> Self {
        let mut entries = Vec::with_capacity(q.n * (q.n + 1) / 2);
        for i in 0..q.n {
            entries.push((i, i, q.matrix[(i, i)]));
            for j in i + 1..q.n {
                entries.push((i, j, q.matrix[(i, j)] + q.matrix[(j, i)]));
            }
        }
        Self {
            n: q.n,
            target_size: q.target_size,
            scale: q.scale,
            shift: ShiftExport { lin: q.shift.lin, quad: q.shift.quad, end_energy: q.shift.end_energy },
            entries,
            metadata: meta,
        }
    }

    pub fn to_qubo(&self) -> Result<ScaledQubo, QuboError> {
        let n = self.n;
        let mut matrix = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            if i > j || j >= n {
                return Err(QuboError::Format(format!("entry ({i}, {j}) is not upper-triangular within n = {n}")));
            }
            if i == j {
                matrix[(i, i)] = v;
            } else {
                matrix[(i, j)] = v / 2.0;
                matrix[(j, i)] = v / 2.0;
            }
        }
        let (k, b) = (self.target_size, self.shift.quad);
        let shift = ShiftParams {
            n,
            target_size: k,
            lin: self.shift.lin,
            quad: b,
            end_energy: self.shift.end_energy,
            full_energy: self.shift.end_energy - b * (n as f64 * (n as f64 - k as f64)),
        };
        Ok(ScaledQubo { n, target_size: k, matrix, scale: self.scale, shift })
    }

    /// `Σ_{i<=j} value·x_i·x_j`.
    pub fn energy(&self, bits: &[bool]) -> f64 {
        self.entries.iter().filter(|(i, j, _)| bits[*i] && bits[*j]).map(|(_, _, v)| v).sum()
    }
}

pub fn export_qubo(q: &ScaledQubo, meta: QuboExportMeta, path: impl AsRef<Path>) -> Result<(), QuboError> {
    let doc = QuboExport::from_qubo(q, meta);
    fs::write(path, numfmt::to_json_f17(&doc)?)?;
    Ok(())
}

pub fn import_qubo(path: impl AsRef<Path>) -> Result<(ScaledQubo, QuboExportMeta), QuboError> {
    let doc: QuboExport = serde_json::from_slice(&fs::read(path)?)?;
    Ok((doc.to_qubo()?, doc.metadata))
}

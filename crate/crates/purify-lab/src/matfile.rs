//! The shared on-disk matrix format: a JSON record with a "dims" list and a
//! row-major "entries" list of [re, im] pairs. Parsers reject any mismatch
//! between the declared dims and the entry count.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DensityState, LabeledOperator};

#[derive(Serialize, Deserialize)]
struct MatRecord {
    dims: Vec<usize>,
    entries: Vec<[f64; 2]>,
}

pub fn read_operator(path: &Path) -> Result<LabeledOperator> {
    let text = std::fs::read_to_string(path)?;
    let rec: MatRecord = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let side: usize = rec.dims.iter().product();
    if rec.dims.is_empty() || side == 0 {
        return Err(Error::Format(format!(
            "{}: dims must be a non-empty list of positive integers",
            path.display()
        )));
    }
    if rec.entries.len() != side * side {
        return Err(Error::Format(format!(
            "{}: {} entries do not fill a {side}×{side} matrix",
            path.display(),
            rec.entries.len()
        )));
    }
    let mat = DMatrix::from_fn(side, side, |r, c| {
        let [re, im] = rec.entries[r * side + c];
        C64::new(re, im)
    });
    LabeledOperator::new(mat, rec.dims)
}

/// Reads an operator file and validates it as a density state.
pub fn read_state(path: &Path) -> Result<DensityState> {
    DensityState::new(read_operator(path)?)
}

/// Writes atomically: the record lands under a temporary name first and is
/// renamed into place, so readers never observe a half-written file.
pub fn write_operator(path: &Path, op: &LabeledOperator) -> Result<()> {
    let side = op.dim();
    let mut entries = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            let z = op.mat[(r, c)];
            entries.push([z.re, z.im]);
        }
    }
    let rec = MatRecord {
        dims: op.dims.clone(),
        entries,
    };
    let text = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
    let tmp = path.with_extension("tmp-matwrite");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

//! Per-query set-overlap recall between two top-k results.

use std::collections::HashSet;

use crate::error::{IndexerError, Result};
use crate::types::TopKResult;

/// Set-overlap recall over valid entries, one value per `(b, t)` row with a
/// non-empty reference, plus summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallReport {
    pub per_row: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    /// Percentage of rows with recall exactly 1.
    pub pct_rows_perfect: f64,
    /// Percentage of rows with recall below 0.99.
    pub pct_rows_below_99: f64,
}

impl RecallReport {
    fn from_rows(per_row: Vec<f64>) -> Self {
        if per_row.is_empty() {
            return Self {
                per_row,
                mean: 1.0,
                min: 1.0,
                pct_rows_perfect: 100.0,
                pct_rows_below_99: 0.0,
            };
        }
        let n = per_row.len() as f64;
        let min = per_row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = per_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Rounding in the sum must not push the mean outside [min, max].
        let mean = (per_row.iter().sum::<f64>() / n).clamp(min, max);
        let perfect = per_row.iter().filter(|&&r| r == 1.0).count() as f64;
        let below = per_row.iter().filter(|&&r| r < 0.99).count() as f64;
        Self {
            mean,
            min,
            pct_rows_perfect: 100.0 * perfect / n,
            pct_rows_below_99: 100.0 * below / n,
            per_row,
        }
    }

    /// The strict parity gate: every row recovers its full reference set.
    pub fn is_exact(&self) -> bool {
        self.mean == 1.0 && self.min == 1.0
    }
}

pub fn recall(reference: &TopKResult, test: &TopKResult) -> Result<RecallReport> {
    if !reference.same_shape(test) {
        return Err(IndexerError::ResultShapeMismatch(format!(
            "reference [{}, {}, {}] vs test [{}, {}, {}]",
            reference.batch(),
            reference.seq(),
            reference.k(),
            test.batch(),
            test.seq(),
            test.k()
        )));
    }
    let mut per_row = Vec::new();
    for b in 0..reference.batch() {
        for t in 0..reference.seq() {
            let want = reference.valid(b, t);
            if want.is_empty() {
                continue;
            }
            let got: HashSet<i64> = test.valid(b, t).iter().copied().collect();
            let hits = want.iter().filter(|i| got.contains(i)).count();
            per_row.push(hits as f64 / want.len() as f64);
        }
    }
    Ok(RecallReport::from_rows(per_row))
}

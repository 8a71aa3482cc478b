//! Fused per-tile indexer score.
//!
//! `score[b, i, j] = Σ_h w[b, s0+i, h] · ReLU(Σ_d q[b, s0+i, h, d] · K[b, t0+j, d])`
//!
//! The dot product is accumulated in ascending `d` and the head sum in
//! ascending `h`, starting from `+0.0`. The per-head partial only ever lives
//! in a lane accumulator; nothing of size `H_I` per tile element is
//! allocated.

use half::f16;

use crate::error::{IndexerError, Result};
use crate::ledger::{Charge, MemoryLedger};
use crate::memory::chunk_tile_bytes;
use crate::types::{IndexerInputs, ProblemDims};

/// Score accumulation precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AccumulationMode {
    #[default]
    Fp32,
    /// Round to binary16 (nearest-even, saturating at ±65504) after each
    /// dot product, after each head's contribution is added, and on every
    /// store into the running buffer.
    Fp16Emulated,
}

/// Largest finite binary16 value.
pub const HALF_MAX: f32 = 65504.0;

/// Rounds `x` to the nearest binary16 value, ties to even, saturating
/// overflow to `±HALF_MAX`.
#[inline]
pub fn round_half(x: f32) -> f32 {
    let r = f16::from_f32(x).to_f32();
    if r.is_infinite() && x.is_finite() {
        HALF_MAX.copysign(x)
    } else {
        r
    }
}

/// A `[B, rows, cols]` block of head-summed scores at offset `(s0, t0)`.
#[derive(Debug)]
pub struct ScoreTile<'l> {
    batch: usize,
    rows: usize,
    cols: usize,
    s0: usize,
    t0: usize,
    scores: Vec<f32>,
    _charge: Charge<'l>,
}

impl<'l> ScoreTile<'l> {
    /// Wraps precomputed scores (layout `[batch, rows, cols]`) as a tile,
    /// charging the ledger for it.
    pub fn from_scores(
        batch: usize,
        rows: usize,
        cols: usize,
        s0: usize,
        t0: usize,
        scores: Vec<f32>,
        ledger: &'l MemoryLedger,
    ) -> Result<Self> {
        if scores.len() != batch * rows * cols {
            return Err(IndexerError::LengthMismatch {
                tensor: "scores",
                expected: batch * rows * cols,
                actual: scores.len(),
            });
        }
        let charge = ledger.charge("score_tile", chunk_tile_bytes(batch, rows, cols)?);
        Ok(Self {
            batch,
            rows,
            cols,
            s0,
            t0,
            scores,
            _charge: charge,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn s0(&self) -> usize {
        self.s0
    }
    pub fn t0(&self) -> usize {
        self.t0
    }
    pub fn scores(&self) -> &[f32] {
        &self.scores
    }
    pub fn scores_mut(&mut self) -> &mut [f32] {
        &mut self.scores
    }

    pub fn get(&self, b: usize, i: usize, j: usize) -> f32 {
        self.scores[(b * self.rows + i) * self.cols + j]
    }

    pub fn row(&self, b: usize, i: usize) -> &[f32] {
        let start = (b * self.rows + i) * self.cols;
        &self.scores[start..start + self.cols]
    }
}

fn check_range(axis: &'static str, start: usize, len: usize, extent: usize) -> Result<()> {
    if len == 0 || start.checked_add(len).is_none_or(|end| end > extent) {
        return Err(IndexerError::TileOutOfRange {
            axis,
            start,
            len,
            extent,
        });
    }
    Ok(())
}

const LANES: usize = 16;

#[inline(always)]
fn relu(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Scores one `(rows, cols)` tile at offset `(s0, t0)`.
///
/// The ledger is charged for the tile; the charge is released when the
/// returned tile is dropped.
#[allow(clippy::too_many_arguments)]
pub fn score_tile<'l>(
    inputs: &IndexerInputs,
    dims: &ProblemDims,
    s0: usize,
    t0: usize,
    rows: usize,
    cols: usize,
    mode: AccumulationMode,
    ledger: &'l MemoryLedger,
) -> Result<ScoreTile<'l>> {
    inputs.check_dims(dims)?;
    check_range("seq", s0, rows, dims.seq())?;
    check_range("blocks", t0, cols, dims.blocks())?;

    let batch = dims.batch();
    let heads = dims.heads();
    let dh = dims.head_dim();
    let mut tile = ScoreTile::from_scores(batch, rows, cols, s0, t0, vec![0.0; batch * rows * cols], ledger)?;

    // Key panel, d-major with LANES columns: the only per-call scratch and
    // independent of the tile size.
    let mut panel = vec![0.0f32; dh * LANES];

    for b in 0..batch {
        for j0 in (0..cols).step_by(LANES) {
            let width = LANES.min(cols - j0);
            panel.fill(0.0);
            for l in 0..width {
                let key = inputs.key(b, t0 + j0 + l);
                for (d, &v) in key.iter().enumerate() {
                    panel[d * LANES + l] = v;
                }
            }
            for i in 0..rows {
                let s = s0 + i;
                let w = inputs.head_weights(b, s);
                let mut acc = [0.0f32; LANES];
                for (h, &wh) in w.iter().enumerate().take(heads) {
                    let q = inputs.query(b, s, h);
                    let mut dot = [0.0f32; LANES];
                    for (d, &qd) in q.iter().enumerate() {
                        let p: &[f32; LANES] = panel[d * LANES..(d + 1) * LANES].try_into().unwrap();
                        for l in 0..LANES {
                            dot[l] += qd * p[l];
                        }
                    }
                    match mode {
                        AccumulationMode::Fp32 => {
                            for l in 0..LANES {
                                acc[l] += wh * relu(dot[l]);
                            }
                        }
                        AccumulationMode::Fp16Emulated => {
                            for l in 0..width {
                                acc[l] = round_half(acc[l] + wh * relu(round_half(dot[l])));
                            }
                        }
                    }
                }
                let start = (b * rows + i) * cols + j0;
                tile.scores[start..start + width].copy_from_slice(&acc[..width]);
            }
        }
    }

    if let Some(pos) = tile.scores.iter().position(|v| !v.is_finite()) {
        let (b, rem) = (pos / (rows * cols), pos % (rows * cols));
        return Err(IndexerError::NonFiniteScore {
            batch: b,
            query: s0 + rem / cols,
            block: t0 + rem % cols,
        });
    }
    Ok(tile)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell(heads: usize, dh: usize, q: Vec<f32>, k: Vec<f32>, w: Vec<f32>) -> f32 {
        let dims = ProblemDims::new(1, 1, heads, dh, 1, 1).unwrap();
        let inputs = IndexerInputs::new(dims, q, k, w).unwrap();
        let ledger = MemoryLedger::new();
        let tile = score_tile(&inputs, &dims, 0, 0, 1, 1, AccumulationMode::Fp32, &ledger).unwrap();
        tile.get(0, 0, 0)
    }

    #[test]
    fn relu_zeroes_negative_dot() {
        assert_eq!(one_cell(1, 2, vec![1.0, -2.0], vec![1.0, 1.0], vec![1.0]), 0.0);
    }

    #[test]
    fn weighted_positive_dot() {
        assert_eq!(one_cell(1, 2, vec![1.0, 0.0], vec![2.0, 0.0], vec![0.5]), 1.0);
    }

    #[test]
    fn negative_weight_after_relu() {
        assert_eq!(one_cell(2, 1, vec![3.0, 2.0], vec![1.0], vec![1.0, -1.0]), 1.0);
    }

    #[test]
    fn out_of_range_tiles_fail() {
        let dims = ProblemDims::new(1, 8, 1, 1, 4, 1).unwrap();
        let inputs = IndexerInputs::new(dims, vec![1.0; 8], vec![1.0; 2], vec![1.0; 8]).unwrap();
        let ledger = MemoryLedger::new();
        let mode = AccumulationMode::Fp32;
        assert!(score_tile(&inputs, &dims, 4, 0, 5, 1, mode, &ledger).is_err());
        assert!(score_tile(&inputs, &dims, 0, 1, 1, 2, mode, &ledger).is_err());
        assert!(score_tile(&inputs, &dims, 0, 0, 0, 1, mode, &ledger).is_err());
        assert!(score_tile(&inputs, &dims, 0, 0, 8, 2, mode, &ledger).is_ok());
    }

    #[test]
    fn one_charge_per_tile() {
        let dims = ProblemDims::new(2, 8, 1, 3, 2, 1).unwrap();
        let inputs = IndexerInputs::new(dims, vec![0.5; 48], vec![0.5; 24], vec![1.0; 16]).unwrap();
        let ledger = MemoryLedger::with_event_log();
        {
            let _tile = score_tile(&inputs, &dims, 2, 1, 3, 2, AccumulationMode::Fp32, &ledger).unwrap();
            assert_eq!(ledger.live_bytes(), 2 * 3 * 2 * 4);
        }
        assert_eq!(ledger.live_bytes(), 0);
        assert_eq!(ledger.events().len(), 2);
    }

    #[test]
    fn fp32_overflow_is_reported() {
        let dims = ProblemDims::new(1, 1, 1, 2, 1, 1).unwrap();
        let inputs = IndexerInputs::new(dims, vec![3e38, 3e38], vec![3e38, 3e38], vec![1.0]).unwrap();
        let ledger = MemoryLedger::new();
        let err = score_tile(&inputs, &dims, 0, 0, 1, 1, AccumulationMode::Fp32, &ledger).unwrap_err();
        assert!(matches!(err, IndexerError::NonFiniteScore { .. }));
        assert_eq!(ledger.live_bytes(), 0);
    }

    #[test]
    fn half_rounding_saturates() {
        assert_eq!(round_half(1.0e6), HALF_MAX);
        assert_eq!(round_half(-1.0e6), -HALF_MAX);
        assert_eq!(round_half(65519.0), HALF_MAX);
        // 1 + 2^-11 is a tie between 1 and 1 + 2^-10; even mantissa wins.
        assert_eq!(round_half(1.0 + 2f32.powi(-11)), 1.0);
        assert_eq!(round_half(1.0 + 3.0 * 2f32.powi(-11)), 1.0 + 2.0 * 2f32.powi(-10));
    }

    #[test]
    fn fp16_mode_stays_finite_under_overflow() {
        let dims = ProblemDims::new(1, 1, 2, 1, 1, 1).unwrap();
        let inputs = IndexerInputs::new(dims, vec![400.0, 400.0], vec![400.0], vec![1.0, 1.0]).unwrap();
        let ledger = MemoryLedger::new();
        let tile = score_tile(&inputs, &dims, 0, 0, 1, 1, AccumulationMode::Fp16Emulated, &ledger).unwrap();
        assert_eq!(tile.get(0, 0, 0), HALF_MAX);
    }
}

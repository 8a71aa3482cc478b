//! Legal-range arithmetic and per-tile causal masking.
//!
//! Query `t` may select block `s` iff `s < ⌊(t+1)/m⌋`: the block lies fully
//! in the query's past. Masks are built per tile from offsets, so mask
//! memory is bounded by the tile size, never by `S · T`.

use crate::error::Result;
use crate::ledger::{Charge, MemoryLedger};
use crate::memory::mask_tile_bytes;
use crate::score::ScoreTile;

/// Number of compressed blocks fully inside the past of query `t`.
#[inline]
pub fn t_legal(t: usize, ratio: usize) -> usize {
    (t + 1) / ratio
}

/// `min(k, t_legal(t))`: how many valid entries query `t` returns.
#[inline]
pub fn k_eff(t: usize, ratio: usize, k: usize) -> usize {
    k.min(t_legal(t, ratio))
}

/// True when no entry of the tile is legal, i.e. the first key block is
/// already past the last query row's legal range.
#[inline]
pub fn tile_fully_masked(s0: usize, rows: usize, t0: usize, ratio: usize) -> bool {
    t0 >= t_legal(s0 + rows - 1, ratio)
}

/// Writes `-inf` into every illegal entry of the tile, in place.
pub fn mask_tile(tile: &mut ScoreTile<'_>, ratio: usize) {
    let (rows, cols, s0, t0) = (tile.rows(), tile.cols(), tile.s0(), tile.t0());
    for (n, row) in tile.scores_mut().chunks_exact_mut(cols).enumerate() {
        let legal = t_legal(s0 + n % rows, ratio);
        let first_masked = legal.saturating_sub(t0).min(cols);
        row[first_masked..].fill(f32::NEG_INFINITY);
    }
}

/// Explicit boolean `[rows, cols]` mask (`true` = legal), shared by every
/// batch. Only used to make the per-tile mask memory visible in the ledger.
#[derive(Debug)]
pub struct MaskTile<'l> {
    rows: usize,
    cols: usize,
    legal: Vec<bool>,
    _charge: Charge<'l>,
}

impl<'l> MaskTile<'l> {
    pub fn build(
        s0: usize,
        t0: usize,
        rows: usize,
        cols: usize,
        ratio: usize,
        ledger: &'l MemoryLedger,
    ) -> Result<Self> {
        let charge = ledger.charge("mask_tile", mask_tile_bytes(rows, cols)?);
        let mut legal = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let limit = t_legal(s0 + i, ratio);
            legal.extend((0..cols).map(|j| t0 + j < limit));
        }
        Ok(Self {
            rows,
            cols,
            legal,
            _charge: charge,
        })
    }

    pub fn is_legal(&self, i: usize, j: usize) -> bool {
        self.legal[i * self.cols + j]
    }

    /// Applies the mask to a tile of the same extent.
    pub fn apply(&self, tile: &mut ScoreTile<'_>) {
        debug_assert_eq!((tile.rows(), tile.cols()), (self.rows, self.cols));
        for row in tile.scores_mut().chunks_exact_mut(self.cols * self.rows) {
            for (v, &ok) in row.iter_mut().zip(&self.legal) {
                if !ok {
                    *v = f32::NEG_INFINITY;
                }
            }
        }
    }
}

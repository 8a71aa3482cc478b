//! Analytic byte counts for the materialize and chunked paths.

use crate::error::{IndexerError, Result};
use crate::types::ProblemDims;

const F32_BYTES: u64 = 4;
/// One running-buffer or per-tile top-k entry: an f32 score and an i64 index.
pub const ENTRY_BYTES: u64 = 12;

fn product(label: &'static str, factors: &[u64]) -> Result<u64> {
    factors
        .iter()
        .try_fold(1u64, |acc, &f| acc.checked_mul(f))
        .ok_or(IndexerError::ByteOverflow(label))
}

/// Bytes of the `[B, S, H_I, T]` FP32 per-head score intermediate the
/// reference einsum produces before the head sum.
pub fn materialize_bytes(dims: &ProblemDims) -> Result<u64> {
    materialize_bytes_raw(
        dims.batch() as u64,
        dims.seq() as u64,
        dims.heads() as u64,
        dims.blocks() as u64,
    )
}

/// [`materialize_bytes`] on raw extents, for shapes that need not satisfy
/// `T = S / m`.
pub fn materialize_bytes_raw(batch: u64, seq: u64, heads: u64, blocks: u64) -> Result<u64> {
    product("materialize", &[batch, seq, heads, blocks, F32_BYTES])
}

/// Bytes of the head-summed `[B, S, T]` score matrix.
pub fn score_matrix_bytes(dims: &ProblemDims) -> Result<u64> {
    product(
        "score matrix",
        &[dims.batch() as u64, dims.seq() as u64, dims.blocks() as u64, F32_BYTES],
    )
}

/// Working set of the einsum reference: the per-head intermediate, the
/// weighted copy produced by `relu * weights`, and the head-summed matrix.
pub fn reference_working_set_bytes(dims: &ProblemDims) -> Result<u64> {
    let inter = materialize_bytes(dims)?;
    let summed = score_matrix_bytes(dims)?;
    inter
        .checked_mul(2)
        .and_then(|v| v.checked_add(summed))
        .ok_or(IndexerError::ByteOverflow("reference working set"))
}

/// Bytes of one `[B, c_S, c_T]` FP32 score tile.
pub fn chunk_tile_bytes(batch: usize, c_s: usize, c_t: usize) -> Result<u64> {
    product("chunk tile", &[batch as u64, c_s as u64, c_t as u64, F32_BYTES])
}

/// Bytes of the `[B, c_S, k]` running (score, index) buffer.
pub fn running_buffer_bytes(batch: usize, c_s: usize, k: usize) -> Result<u64> {
    product("running buffer", &[batch as u64, c_s as u64, k as u64, ENTRY_BYTES])
}

/// Bytes of the per-tile top-k scratch, `[B, c_S, min(k, c_T)]` entries.
pub fn tile_topk_bytes(batch: usize, c_s: usize, c_t: usize, k: usize) -> Result<u64> {
    product(
        "tile top-k",
        &[batch as u64, c_s as u64, k.min(c_t) as u64, ENTRY_BYTES],
    )
}

/// Bytes of a boolean `[c_S, c_T]` mask tile.
pub fn mask_tile_bytes(c_s: usize, c_t: usize) -> Result<u64> {
    product("mask tile", &[c_s as u64, c_t as u64])
}

/// Upper bound on the chunked driver's transient bytes in single-threaded
/// mode: score tile + tile top-k scratch + running buffer (+ optional mask).
pub fn chunked_peak_bound(
    batch: usize,
    c_s: usize,
    c_t: usize,
    k: usize,
    boolean_mask: bool,
) -> Result<u64> {
    let mask = if boolean_mask { mask_tile_bytes(c_s, c_t)? } else { 0 };
    [
        chunk_tile_bytes(batch, c_s, c_t)?,
        tile_topk_bytes(batch, c_s, c_t, k)?,
        running_buffer_bytes(batch, c_s, k)?,
        mask,
    ]
    .iter()
    .try_fold(0u64, |acc, &b| acc.checked_add(b))
    .ok_or(IndexerError::ByteOverflow("chunked peak bound"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GIB: u64 = 1 << 30;

    #[test]
    fn intermediate_sizes_at_v4_flash_dims() {
        let at = |s| materialize_bytes(&ProblemDims::v4_flash(s).unwrap()).unwrap();
        assert_eq!(at(65_536), 274_877_906_944);
        assert_eq!(at(65_536), 256 * GIB);
        assert_eq!(at(131_072), 1_099_511_627_776);
        assert_eq!(at(262_144), 4096 * GIB);
        assert_eq!(at(32_768), 64 * GIB);
    }

    #[test]
    fn single_element() {
        let d = ProblemDims::new(1, 1, 1, 1, 1, 1).unwrap();
        assert_eq!(materialize_bytes(&d).unwrap(), 4);
        assert_eq!(chunk_tile_bytes(1, 1, 1).unwrap(), 4);
    }

    #[test]
    fn chunk_tiles() {
        assert_eq!(chunk_tile_bytes(1, 2048, 8192).unwrap(), 67_108_864);
        assert_eq!(chunk_tile_bytes(2, 128, 256).unwrap(), 262_144);
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(
            materialize_bytes_raw(u64::MAX / 2, 2, 1, 1),
            Err(IndexerError::ByteOverflow("materialize"))
        );
        assert!(chunk_tile_bytes(usize::MAX, usize::MAX, 2).is_err());
    }

    #[test]
    fn reference_working_set_at_32k() {
        let d = ProblemDims::v4_flash(32_768).unwrap();
        assert_eq!(reference_working_set_bytes(&d).unwrap(), 129 * GIB);
    }

    #[test]
    fn materialize_monotone_in_each_axis() {
        let base = [2u64, 64, 8, 16];
        let v0 = materialize_bytes_raw(base[0], base[1], base[2], base[3]).unwrap();
        for axis in 0..4 {
            let mut up = base;
            up[axis] += 1;
            assert!(materialize_bytes_raw(up[0], up[1], up[2], up[3]).unwrap() > v0);
        }
    }
}

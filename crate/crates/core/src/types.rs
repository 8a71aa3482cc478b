//! Shape, input and output containers shared across the pipeline.
//!
//! Every tensor is a flat row-major `Vec` with its logical shape carried by
//! [`ProblemDims`]; there are no strided views.

use crate::error::{IndexerError, Result};
use crate::topk::ScoredIndex;

/// Index value padding rows whose legal range is smaller than `k`.
pub const SENTINEL: i64 = -1;

/// Shape and scale parameters of one indexer instance.
///
/// The compressed key count is always derived as `seq / ratio`; sequence
/// lengths that are not a multiple of the ratio are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProblemDims {
    batch: usize,
    seq: usize,
    blocks: usize,
    heads: usize,
    head_dim: usize,
    ratio: usize,
    topk: usize,
}

fn require_positive(name: &'static str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(IndexerError::InvalidDims {
            name,
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

impl ProblemDims {
    pub fn new(
        batch: usize,
        seq: usize,
        heads: usize,
        head_dim: usize,
        ratio: usize,
        topk: usize,
    ) -> Result<Self> {
        require_positive("batch", batch)?;
        require_positive("seq", seq)?;
        require_positive("heads", heads)?;
        require_positive("head_dim", head_dim)?;
        require_positive("ratio", ratio)?;
        require_positive("topk", topk)?;
        if !seq.is_multiple_of(ratio) {
            return Err(IndexerError::InvalidDims {
                name: "seq",
                reason: format!("{seq} is not a multiple of the compression ratio {ratio}"),
            });
        }
        Ok(Self {
            batch,
            seq,
            blocks: seq / ratio,
            heads,
            head_dim,
            ratio,
            topk,
        })
    }

    /// V4-Flash indexer shape (64 heads of width 128, ratio 4, top-512) at
    /// sequence length `seq` and batch 1.
    pub fn v4_flash(seq: usize) -> Result<Self> {
        Self::new(1, seq, 64, 128, 4, 512)
    }

    pub fn with_topk(self, topk: usize) -> Result<Self> {
        Self::new(self.batch, self.seq, self.heads, self.head_dim, self.ratio, topk)
    }

    pub fn with_seq(self, seq: usize) -> Result<Self> {
        Self::new(self.batch, seq, self.heads, self.head_dim, self.ratio, self.topk)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn seq(&self) -> usize {
        self.seq
    }
    pub fn blocks(&self) -> usize {
        self.blocks
    }
    pub fn heads(&self) -> usize {
        self.heads
    }
    pub fn head_dim(&self) -> usize {
        self.head_dim
    }
    pub fn ratio(&self) -> usize {
        self.ratio
    }
    pub fn topk(&self) -> usize {
        self.topk
    }

    pub fn q_len(&self) -> usize {
        self.batch * self.seq * self.heads * self.head_dim
    }
    pub fn keys_len(&self) -> usize {
        self.batch * self.blocks * self.head_dim
    }
    pub fn weights_len(&self) -> usize {
        self.batch * self.seq * self.heads
    }

    /// True when both instances describe the same input tensors (`topk`
    /// is ignored).
    pub fn same_inputs(&self, other: &ProblemDims) -> bool {
        (self.batch, self.seq, self.heads, self.head_dim, self.ratio)
            == (other.batch, other.seq, other.heads, other.head_dim, other.ratio)
    }
}

/// The three indexer inputs: queries `q` `[B, S, H_I, d_h]`, compressed
/// keys `[B, T, d_h]` and head weights `w` `[B, S, H_I]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexerInputs {
    dims: ProblemDims,
    q: Vec<f32>,
    keys: Vec<f32>,
    weights: Vec<f32>,
}

fn check_tensor(tensor: &'static str, data: &[f32], expected: usize) -> Result<()> {
    if data.len() != expected {
        return Err(IndexerError::LengthMismatch {
            tensor,
            expected,
            actual: data.len(),
        });
    }
    if let Some(offset) = data.iter().position(|v| !v.is_finite()) {
        return Err(IndexerError::NonFiniteInput { tensor, offset });
    }
    Ok(())
}

impl IndexerInputs {
    pub fn new(dims: ProblemDims, q: Vec<f32>, keys: Vec<f32>, weights: Vec<f32>) -> Result<Self> {
        check_tensor("q", &q, dims.q_len())?;
        check_tensor("keys", &keys, dims.keys_len())?;
        check_tensor("weights", &weights, dims.weights_len())?;
        Ok(Self {
            dims,
            q,
            keys,
            weights,
        })
    }

    pub fn dims(&self) -> &ProblemDims {
        &self.dims
    }
    pub fn q(&self) -> &[f32] {
        &self.q
    }
    pub fn keys(&self) -> &[f32] {
        &self.keys
    }
    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Query vector of head `h` at position `s` in batch `b`.
    #[inline]
    pub fn query(&self, b: usize, s: usize, h: usize) -> &[f32] {
        let d = &self.dims;
        let start = ((b * d.seq + s) * d.heads + h) * d.head_dim;
        &self.q[start..start + d.head_dim]
    }

    /// Compressed key `t` in batch `b`.
    #[inline]
    pub fn key(&self, b: usize, t: usize) -> &[f32] {
        let d = &self.dims;
        let start = (b * d.blocks + t) * d.head_dim;
        &self.keys[start..start + d.head_dim]
    }

    /// Per-head weights at position `s` in batch `b`.
    #[inline]
    pub fn head_weights(&self, b: usize, s: usize) -> &[f32] {
        let d = &self.dims;
        let start = (b * d.seq + s) * d.heads;
        &self.weights[start..start + d.heads]
    }

    pub(crate) fn check_dims(&self, dims: &ProblemDims) -> Result<()> {
        if self.dims.same_inputs(dims) {
            Ok(())
        } else {
            Err(IndexerError::ShapeMismatch)
        }
    }
}

/// Query-tile (`c_s`) and key-tile (`c_t`) sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileConfig {
    c_s: usize,
    c_t: usize,
}

impl TileConfig {
    pub fn new(c_s: usize, c_t: usize) -> Result<Self> {
        require_positive("c_s", c_s)?;
        require_positive("c_t", c_t)?;
        Ok(Self { c_s, c_t })
    }

    pub fn c_s(&self) -> usize {
        self.c_s
    }
    pub fn c_t(&self) -> usize {
        self.c_t
    }

    /// Tile sizes clamped to the tensor extents.
    pub fn clamped(&self, dims: &ProblemDims) -> (usize, usize) {
        (self.c_s.min(dims.seq()), self.c_t.min(dims.blocks()))
    }

    /// `ceil(S / c_s) * ceil(T / c_t)`: the number of score tiles the
    /// chunked driver dispatches over the full grid.
    pub fn dispatch_count(&self, dims: &ProblemDims) -> u64 {
        (dims.seq().div_ceil(self.c_s) as u64) * (dims.blocks().div_ceil(self.c_t) as u64)
    }
}

/// Running per-query top-k state for one query tile, `[B, rows, k]`.
///
/// Rows are kept sorted in descending order; unused slots hold
/// `(-inf, -1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKBuffer {
    batch: usize,
    rows: usize,
    k: usize,
    entries: Vec<ScoredIndex>,
}

impl TopKBuffer {
    pub fn new(batch: usize, rows: usize, k: usize) -> Self {
        Self {
            batch,
            rows,
            k,
            entries: vec![ScoredIndex::PLACEHOLDER; batch * rows * k],
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, b: usize, i: usize) -> &[ScoredIndex] {
        let start = (b * self.rows + i) * self.k;
        &self.entries[start..start + self.k]
    }

    pub fn row_mut(&mut self, b: usize, i: usize) -> &mut [ScoredIndex] {
        let start = (b * self.rows + i) * self.k;
        &mut self.entries[start..start + self.k]
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, ScoredIndex> {
        self.entries.chunks_exact_mut(self.k)
    }

    /// `run_v` view of the buffer.
    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        self.entries.iter().map(|e| e.score)
    }

    /// `run_i` view of the buffer.
    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.iter().map(|e| e.index)
    }
}

/// Final per-query selection, `[B, S, k]`, with sentinels trailing.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult {
    batch: usize,
    seq: usize,
    k: usize,
    indices: Vec<i64>,
    values: Option<Vec<f32>>,
}

impl TopKResult {
    pub(crate) fn from_parts(
        batch: usize,
        seq: usize,
        k: usize,
        indices: Vec<i64>,
        values: Option<Vec<f32>>,
    ) -> Self {
        debug_assert_eq!(indices.len(), batch * seq * k);
        Self {
            batch,
            seq,
            k,
            indices,
            values,
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn seq(&self) -> usize {
        self.seq
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn indices(&self) -> &[i64] {
        &self.indices
    }
    pub fn values(&self) -> Option<&[f32]> {
        self.values.as_deref()
    }

    pub fn row(&self, b: usize, t: usize) -> &[i64] {
        let start = (b * self.seq + t) * self.k;
        &self.indices[start..start + self.k]
    }

    pub fn row_values(&self, b: usize, t: usize) -> Option<&[f32]> {
        let start = (b * self.seq + t) * self.k;
        self.values.as_ref().map(|v| &v[start..start + self.k])
    }

    /// Leading non-sentinel entries of a row.
    pub fn valid(&self, b: usize, t: usize) -> &[i64] {
        let row = self.row(b, t);
        let n = row.iter().take_while(|&&i| i != SENTINEL).count();
        &row[..n]
    }

    pub fn same_shape(&self, other: &TopKResult) -> bool {
        (self.batch, self.seq, self.k) == (other.batch, other.seq, other.k)
    }
}

//! The `≻` order on (score, index) pairs and the top-k routines built on it.
//!
//! `(a, i) ≻ (b, j)` iff `a > b`, or `a == b` and `i < j`. Every routine
//! here uses that single comparator, so the chunked and materialize paths
//! agree on order as well as on sets.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use crate::error::{IndexerError, Result};
use crate::score::ScoreTile;
use crate::types::SENTINEL;

/// A score paired with a block index (or the `-1` sentinel).
#[derive(Debug, Clone, Copy)]
pub struct ScoredIndex {
    pub score: f32,
    pub index: i64,
}

impl ScoredIndex {
    /// `(-inf, -1)`: the initial running-buffer entry and the final pad.
    pub const PLACEHOLDER: ScoredIndex = ScoredIndex {
        score: f32::NEG_INFINITY,
        index: SENTINEL,
    };

    pub fn new(score: f32, index: i64) -> Self {
        Self { score, index }
    }

    pub fn is_valid(&self) -> bool {
        self.index != SENTINEL && self.score != f32::NEG_INFINITY
    }
}

/// `Greater` iff `a ≻ b`. Scores must not be NaN.
#[inline]
pub fn succ_order(a: &ScoredIndex, b: &ScoredIndex) -> Ordering {
    match a.score.partial_cmp(&b.score) {
        Some(Ordering::Equal) => b.index.cmp(&a.index),
        Some(ord) => ord,
        None => panic!("NaN score in top-k comparison"),
    }
}

impl PartialEq for ScoredIndex {
    fn eq(&self, other: &Self) -> bool {
        succ_order(self, other) == Ordering::Equal
    }
}

impl Eq for ScoredIndex {}

impl PartialOrd for ScoredIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoredIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        succ_order(self, other)
    }
}

/// Descending-`≻` comparator for `sort_by`.
#[inline]
fn descending(a: &ScoredIndex, b: &ScoredIndex) -> Ordering {
    succ_order(b, a)
}

/// Bounded-heap streaming top-k over pairs in arbitrary order.
///
/// Keeps a `≻`-min heap of at most `k` entries. The returned set is sorted
/// descending for convenience; callers comparing against other routines
/// should treat it as a set.
pub fn streaming_topk<I>(pairs: I, k: usize) -> Result<Vec<ScoredIndex>>
where
    I: IntoIterator<Item = ScoredIndex>,
{
    let mut seen = HashSet::new();
    let mut heap: BinaryHeap<Reverse<ScoredIndex>> = BinaryHeap::with_capacity(k + 1);
    for pair in pairs {
        if !seen.insert(pair.index) {
            return Err(IndexerError::DuplicateIndex(pair.index));
        }
        if heap.len() < k {
            heap.push(Reverse(pair));
        } else if let Some(Reverse(min)) = heap.peek() {
            if succ_order(&pair, min) == Ordering::Greater {
                heap.pop();
                heap.push(Reverse(pair));
            }
        }
        assert!(heap.len() <= k, "streaming heap exceeded k");
    }
    let mut out: Vec<ScoredIndex> = heap.into_iter().map(|Reverse(e)| e).collect();
    out.sort_unstable_by(descending);
    Ok(out)
}

/// Top `min(k, row.len())` entries of one score row, sorted descending,
/// with indices offset by `t0`. Appends to `out`.
pub(crate) fn row_topk(row: &[f32], t0: usize, k: usize, out: &mut Vec<ScoredIndex>) {
    let start = out.len();
    out.extend(
        row.iter()
            .enumerate()
            .map(|(j, &s)| ScoredIndex::new(s, (t0 + j) as i64)),
    );
    let cand = &mut out[start..];
    let keep = k.min(cand.len());
    if keep < cand.len() {
        cand.select_nth_unstable_by(keep - 1, descending);
    }
    cand[..keep].sort_unstable_by(descending);
    out.truncate(start + keep);
}

/// Per-row top-k of a masked score tile, `[B, rows, min(k, cols)]` entries
/// with global block indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TileTopK {
    pub batch: usize,
    pub rows: usize,
    pub width: usize,
    pub entries: Vec<ScoredIndex>,
}

impl TileTopK {
    pub fn row(&self, b: usize, i: usize) -> &[ScoredIndex] {
        let start = (b * self.rows + i) * self.width;
        &self.entries[start..start + self.width]
    }
}

/// Per-row top-`min(k, cols)` of a (masked) score tile, sorted descending.
/// Masked `-inf` entries can appear when a row has fewer legal entries
/// than the width; they lose every merge against the running buffer.
pub fn tile_topk(tile: &ScoreTile<'_>, k: usize) -> TileTopK {
    let width = k.min(tile.cols());
    let mut entries = Vec::with_capacity(tile.batch() * tile.rows() * width);
    for row in tile.scores().chunks_exact(tile.cols()) {
        row_topk(row, tile.t0(), k, &mut entries);
    }
    TileTopK {
        batch: tile.batch(),
        rows: tile.rows(),
        width,
        entries,
    }
}

/// Two-pointer merge of a descending tile list into a descending running
/// row, keeping the first `buf.len()` entries. Index sets must be disjoint.
pub(crate) fn merge_sorted(buf: &mut [ScoredIndex], tile: &[ScoredIndex], scratch: &mut Vec<ScoredIndex>) {
    let k = buf.len();
    scratch.clear();
    let (mut i, mut j) = (0, 0);
    while scratch.len() < k {
        let take_buf = match (buf.get(i), tile.get(j)) {
            (Some(a), Some(b)) => succ_order(a, b) == Ordering::Greater,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if take_buf {
            scratch.push(buf[i]);
            i += 1;
        } else {
            scratch.push(tile[j]);
            j += 1;
        }
    }
    buf.copy_from_slice(scratch);
}

/// Merges a descending tile list into a descending running row.
///
/// Fails if the two lists share a block index (sentinel `-1` entries are
/// exempt).
pub fn merge_topk(buf: &mut [ScoredIndex], tile: &[ScoredIndex]) -> Result<()> {
    let held: HashSet<i64> = buf
        .iter()
        .map(|e| e.index)
        .filter(|&i| i != SENTINEL)
        .collect();
    if let Some(dup) = tile.iter().find(|e| e.index != SENTINEL && held.contains(&e.index)) {
        return Err(IndexerError::DuplicateIndex(dup.index));
    }
    let mut scratch = Vec::with_capacity(buf.len());
    merge_sorted(buf, tile, &mut scratch);
    Ok(())
}

/// Ground-truth selection over a full score row: sort every legal
/// `(score, index)` pair (indices `0..t_legal`) under `≻` and keep the
/// first `min(k, t_legal)`. Returned in descending order.
pub fn oracle_topk(row: &[f32], k: usize, t_legal: usize) -> Vec<ScoredIndex> {
    let legal = t_legal.min(row.len());
    let mut all: Vec<ScoredIndex> = row[..legal]
        .iter()
        .enumerate()
        .map(|(j, &s)| ScoredIndex::new(s, j as i64))
        .collect();
    all.sort_by(descending);
    all.truncate(k.min(legal));
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn si(score: f32, index: i64) -> ScoredIndex {
        ScoredIndex::new(score, index)
    }

    fn pairs(list: &[ScoredIndex]) -> Vec<(f32, i64)> {
        list.iter().map(|e| (e.score, e.index)).collect()
    }

    #[test]
    fn order_examples() {
        assert_eq!(succ_order(&si(5.0, 2), &si(5.0, 7)), Ordering::Greater);
        assert_eq!(succ_order(&si(f32::NEG_INFINITY, 3), &si(0.0, 9)), Ordering::Less);
        assert_eq!(succ_order(&si(1.0, 0), &si(2.0, 5)), Ordering::Less);
        assert_eq!(succ_order(&si(-0.0, 1), &si(0.0, 2)), Ordering::Greater);
    }

    #[test]
    fn streaming_example_with_tie() {
        let input = [si(5.0, 0), si(3.0, 1), si(5.0, 2), si(9.0, 3)];
        let out = streaming_topk(input, 2).unwrap();
        assert_eq!(pairs(&out), vec![(9.0, 3), (5.0, 0)]);
    }

    #[test]
    fn streaming_small_inputs() {
        let input = [si(1.0, 4), si(2.0, 9)];
        assert_eq!(streaming_topk(input, 5).unwrap().len(), 2);
        assert!(streaming_topk(std::iter::empty(), 3).unwrap().is_empty());
    }

    #[test]
    fn streaming_rejects_duplicates() {
        let input = [si(1.0, 4), si(2.0, 4)];
        assert_eq!(streaming_topk(input, 2), Err(IndexerError::DuplicateIndex(4)));
    }

    #[test]
    fn row_topk_examples() {
        let mut out = Vec::new();
        row_topk(&[2.0, f32::NEG_INFINITY, 7.0], 8, 2, &mut out);
        assert_eq!(pairs(&out), vec![(7.0, 10), (2.0, 8)]);

        out.clear();
        row_topk(&[f32::NEG_INFINITY; 3], 8, 2, &mut out);
        assert_eq!(pairs(&out), vec![(f32::NEG_INFINITY, 8), (f32::NEG_INFINITY, 9)]);

        out.clear();
        row_topk(&[4.0], 0, 3, &mut out);
        assert_eq!(pairs(&out), vec![(4.0, 0)]);
    }

    #[test]
    fn merge_examples() {
        let mut buf = vec![si(9.0, 3), si(5.0, 0)];
        merge_topk(&mut buf, &[si(7.0, 10), si(5.0, 12)]).unwrap();
        assert_eq!(pairs(&buf), vec![(9.0, 3), (7.0, 10)]);

        let mut buf = vec![ScoredIndex::PLACEHOLDER; 2];
        merge_topk(&mut buf, &[si(4.0, 2)]).unwrap();
        assert_eq!(pairs(&buf), vec![(4.0, 2), (f32::NEG_INFINITY, -1)]);

        let mut buf = vec![si(5.0, 4), ScoredIndex::PLACEHOLDER];
        merge_topk(&mut buf, &[si(5.0, 1)]).unwrap();
        assert_eq!(pairs(&buf), vec![(5.0, 1), (5.0, 4)]);
    }

    #[test]
    fn merge_rejects_overlap() {
        let mut buf = vec![si(9.0, 3), si(5.0, 0)];
        assert_eq!(
            merge_topk(&mut buf, &[si(1.0, 3)]),
            Err(IndexerError::DuplicateIndex(3))
        );
    }

    #[test]
    fn masked_placeholders_never_displace_sentinels() {
        let mut buf = vec![ScoredIndex::PLACEHOLDER; 2];
        merge_topk(&mut buf, &[si(f32::NEG_INFINITY, 8), si(f32::NEG_INFINITY, 9)]).unwrap();
        assert!(buf.iter().all(|e| e.index == SENTINEL));
    }

    #[test]
    fn oracle_edge_cases() {
        assert!(oracle_topk(&[1.0, 2.0], 4, 0).is_empty());
        let all = oracle_topk(&[1.0, 3.0, 2.0, 9.0], 10, 3);
        assert_eq!(pairs(&all), vec![(3.0, 1), (2.0, 2), (1.0, 0)]);
    }
}

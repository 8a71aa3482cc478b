//! Chunked partition-merge driver, the materialize reference, and the
//! size-based dispatch between them.

use rayon::prelude::*;

use crate::causal::{mask_tile, t_legal, tile_fully_masked, k_eff, MaskTile};
use crate::error::{IndexerError, Result};
use crate::ledger::MemoryLedger;
use crate::memory::{materialize_bytes, running_buffer_bytes, score_matrix_bytes, tile_topk_bytes};
use crate::score::{round_half, score_tile, AccumulationMode};
use crate::topk::{merge_sorted, oracle_topk, tile_topk, ScoredIndex};
use crate::types::{IndexerInputs, ProblemDims, TileConfig, TopKBuffer, TopKResult, SENTINEL};

/// Deliberate breakages of the production driver, for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Ablation {
    #[default]
    None,
    /// Replace the merge with an overwrite: the running buffer keeps only
    /// the most recently processed tile's top-k.
    NoMerge,
    /// Skip every key tile narrower than `k` instead of taking all of it.
    SkipSaturated,
}

/// How the per-tile causal mask is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MaskMode {
    /// Write `-inf` straight into the score tile.
    #[default]
    InPlace,
    /// Build an explicit boolean tile first (charged to the ledger).
    BooleanTile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverConfig {
    pub tile: TileConfig,
    pub mode: AccumulationMode,
    pub ablation: Ablation,
    /// Largest per-head intermediate, in bytes, that still takes the
    /// materialize path in [`dispatch`].
    pub auto_threshold_bytes: u64,
    pub mask: MaskMode,
    /// Skip key tiles that are entirely in the future of every query row.
    /// Off by default so the dispatch count equals the full tile grid.
    pub causal_skip: bool,
    /// Process query tiles concurrently. Results are bit-identical to the
    /// sequential mode; ledger peaks are only meaningful sequentially.
    pub parallel: bool,
}

impl DriverConfig {
    pub const DEFAULT_THRESHOLD_BYTES: u64 = 1 << 30;

    pub fn new(tile: TileConfig) -> Self {
        Self {
            tile,
            mode: AccumulationMode::Fp32,
            ablation: Ablation::None,
            auto_threshold_bytes: Self::DEFAULT_THRESHOLD_BYTES,
            mask: MaskMode::InPlace,
            causal_skip: false,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionPath {
    Materialize,
    Chunked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchDecision {
    pub path: ExecutionPath,
    /// [`materialize_bytes`] of the problem, which drove the decision.
    pub predicted_bytes: u64,
}

/// Output of a chunked run together with its tile counters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedRun {
    pub result: TopKResult,
    /// Number of `score_tile` invocations.
    pub dispatch_count: u64,
    /// Key tiles skipped by the causal early-exit or the A2 ablation.
    pub skipped_tiles: u64,
}

struct QueryTileOutput {
    s0: usize,
    rows: usize,
    buffer: TopKBuffer,
    dispatches: u64,
    skipped: u64,
}

fn process_query_tile(
    inputs: &IndexerInputs,
    dims: &ProblemDims,
    config: &DriverConfig,
    ledger: &MemoryLedger,
    s0: usize,
    rows: usize,
    c_t: usize,
) -> Result<QueryTileOutput> {
    let (batch, blocks, k, ratio) = (dims.batch(), dims.blocks(), dims.topk(), dims.ratio());
    let _running = ledger.charge("running_buffer", running_buffer_bytes(batch, rows, k)?);
    let mut buffer = TopKBuffer::new(batch, rows, k);
    let mut merge_scratch = Vec::with_capacity(k);
    let (mut dispatches, mut skipped) = (0u64, 0u64);

    for t0 in (0..blocks).step_by(c_t) {
        let cols = c_t.min(blocks - t0);
        if config.ablation == Ablation::SkipSaturated && cols < k {
            skipped += 1;
            continue;
        }
        if config.causal_skip && tile_fully_masked(s0, rows, t0, ratio) {
            skipped += 1;
            continue;
        }

        let mut tile = score_tile(inputs, dims, s0, t0, rows, cols, config.mode, ledger)?;
        dispatches += 1;
        match config.mask {
            MaskMode::InPlace => mask_tile(&mut tile, ratio),
            MaskMode::BooleanTile => MaskTile::build(s0, t0, rows, cols, ratio, ledger)?.apply(&mut tile),
        }

        let _scratch = ledger.charge("tile_topk", tile_topk_bytes(batch, rows, cols, k)?);
        let mut top = tile_topk(&tile, k);
        drop(tile);
        if config.mode == AccumulationMode::Fp16Emulated {
            // Idempotent: tile scores are already binary16 values.
            for e in &mut top.entries {
                e.score = round_half(e.score);
            }
        }

        for (n, row) in buffer.rows_mut().enumerate() {
            let incoming = top.row(n / rows, n % rows);
            match config.ablation {
                Ablation::NoMerge => {
                    row.fill(ScoredIndex::PLACEHOLDER);
                    for (slot, e) in row.iter_mut().zip(incoming) {
                        if e.score != f32::NEG_INFINITY {
                            *slot = *e;
                        }
                    }
                }
                _ => merge_sorted(row, incoming, &mut merge_scratch),
            }
        }
    }

    // Sentinel-ize: every surviving -inf becomes (-inf, -1).
    for (n, row) in buffer.rows_mut().enumerate() {
        for e in row.iter_mut() {
            if e.score == f32::NEG_INFINITY {
                *e = ScoredIndex::PLACEHOLDER;
            }
        }
        if config.ablation == Ablation::None {
            let query = s0 + n % rows;
            let expected = k_eff(query, ratio, k);
            let actual = row.iter().filter(|e| e.index != SENTINEL).count();
            if actual != expected {
                return Err(IndexerError::EffectiveTopK {
                    batch: n / rows,
                    query,
                    expected,
                    actual,
                });
            }
        }
    }

    Ok(QueryTileOutput {
        s0,
        rows,
        buffer,
        dispatches,
        skipped,
    })
}

/// Chunked top-k over `(c_S, c_T)` tiles. Tile sizes larger than the
/// tensor extents are clamped.
pub fn run_chunked(
    inputs: &IndexerInputs,
    dims: &ProblemDims,
    config: &DriverConfig,
    ledger: &MemoryLedger,
) -> Result<TopKResult> {
    run_chunked_with_stats(inputs, dims, config, ledger).map(|run| run.result)
}

pub fn run_chunked_with_stats(
    inputs: &IndexerInputs,
    dims: &ProblemDims,
    config: &DriverConfig,
    ledger: &MemoryLedger,
) -> Result<ChunkedRun> {
    inputs.check_dims(dims)?;
    let (c_s, c_t) = config.tile.clamped(dims);
    let (batch, seq, k) = (dims.batch(), dims.seq(), dims.topk());
    let starts: Vec<usize> = (0..seq).step_by(c_s).collect();
    let run_one = |&s0: &usize| process_query_tile(inputs, dims, config, ledger, s0, c_s.min(seq - s0), c_t);

    let outputs: Vec<QueryTileOutput> = if config.parallel {
        starts.par_iter().map(run_one).collect::<Result<_>>()?
    } else {
        starts.iter().map(run_one).collect::<Result<_>>()?
    };

    let mut indices = vec![SENTINEL; batch * seq * k];
    let mut values = vec![f32::NEG_INFINITY; batch * seq * k];
    let (mut dispatch_count, mut skipped_tiles) = (0, 0);
    for out in outputs {
        dispatch_count += out.dispatches;
        skipped_tiles += out.skipped;
        for b in 0..batch {
            for i in 0..out.rows {
                let dst = (b * seq + out.s0 + i) * k;
                for (n, e) in out.buffer.row(b, i).iter().enumerate() {
                    indices[dst + n] = e.index;
                    values[dst + n] = e.score;
                }
            }
        }
    }
    Ok(ChunkedRun {
        result: TopKResult::from_parts(batch, seq, k, indices, Some(values)),
        dispatch_count,
        skipped_tiles,
    })
}

const KEY_BLOCK: usize = 8;

/// Reference path: build the full head-summed `[B, S, T]` score matrix one
/// head at a time, mask it, and select each row by full sort.
///
/// Uses the same per-element summation order as the tiled score kernel
/// (ascending `d`, then ascending `h`) but a different loop structure.
pub fn run_materialize(
    inputs: &IndexerInputs,
    dims: &ProblemDims,
    mode: AccumulationMode,
    ledger: &MemoryLedger,
) -> Result<TopKResult> {
    inputs.check_dims(dims)?;
    let (batch, seq, blocks, heads, k, ratio) = (
        dims.batch(),
        dims.seq(),
        dims.blocks(),
        dims.heads(),
        dims.topk(),
        dims.ratio(),
    );
    let _matrix = ledger.charge("score_matrix", score_matrix_bytes(dims)?);
    let mut scores = vec![0.0f32; batch * seq * blocks];

    for b in 0..batch {
        for h in 0..heads {
            for s in 0..seq {
                let q = inputs.query(b, s, h);
                let w = inputs.head_weights(b, s)[h];
                let row = &mut scores[(b * seq + s) * blocks..(b * seq + s + 1) * blocks];
                let mut t = 0;
                while t < blocks {
                    let n = KEY_BLOCK.min(blocks - t);
                    let mut dots = [0.0f32; KEY_BLOCK];
                    if n == KEY_BLOCK {
                        let keys: [&[f32]; KEY_BLOCK] = std::array::from_fn(|l| inputs.key(b, t + l));
                        for (d, &qd) in q.iter().enumerate() {
                            for l in 0..KEY_BLOCK {
                                dots[l] += qd * keys[l][d];
                            }
                        }
                    } else {
                        for (l, dot) in dots.iter_mut().enumerate().take(n) {
                            for (qd, kd) in q.iter().zip(inputs.key(b, t + l)) {
                                *dot += qd * kd;
                            }
                        }
                    }
                    for l in 0..n {
                        let cell = &mut row[t + l];
                        *cell = match mode {
                            AccumulationMode::Fp32 => *cell + w * dots[l].max(0.0),
                            AccumulationMode::Fp16Emulated => {
                                round_half(*cell + w * round_half(dots[l]).max(0.0))
                            }
                        };
                    }
                    t += n;
                }
            }
        }
    }

    for b in 0..batch {
        for s in 0..seq {
            let row = &mut scores[(b * seq + s) * blocks..(b * seq + s + 1) * blocks];
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(IndexerError::NonFiniteScore {
                    batch: b,
                    query: s,
                    block: j,
                });
            }
            let legal = t_legal(s, ratio).min(blocks);
            row[legal..].fill(f32::NEG_INFINITY);
        }
    }

    let mut indices = vec![SENTINEL; batch * seq * k];
    let mut values = vec![f32::NEG_INFINITY; batch * seq * k];
    for b in 0..batch {
        for s in 0..seq {
            let row = &scores[(b * seq + s) * blocks..(b * seq + s + 1) * blocks];
            let dst = (b * seq + s) * k;
            for (n, e) in oracle_topk(row, k, t_legal(s, ratio)).into_iter().enumerate() {
                indices[dst + n] = e.index;
                values[dst + n] = e.score;
            }
        }
    }
    Ok(TopKResult::from_parts(batch, seq, k, indices, Some(values)))
}

/// Chooses a path by the size of the per-head intermediate
/// ([`materialize_bytes`]) and runs it.
pub fn decide(dims: &ProblemDims, config: &DriverConfig) -> Result<DispatchDecision> {
    let predicted_bytes = materialize_bytes(dims)?;
    let path = if predicted_bytes <= config.auto_threshold_bytes {
        ExecutionPath::Materialize
    } else {
        ExecutionPath::Chunked
    };
    Ok(DispatchDecision {
        path,
        predicted_bytes,
    })
}

pub fn dispatch(
    inputs: &IndexerInputs,
    dims: &ProblemDims,
    config: &DriverConfig,
    ledger: &MemoryLedger,
) -> Result<(DispatchDecision, TopKResult)> {
    let decision = decide(dims, config)?;
    let result = match decision.path {
        ExecutionPath::Materialize => run_materialize(inputs, dims, config.mode, ledger)?,
        ExecutionPath::Chunked => run_chunked(inputs, dims, config, ledger)?,
    };
    Ok((decision, result))
}

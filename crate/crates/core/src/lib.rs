//! Lightning-indexer top-k selection for compressed sparse attention.
//!
//! The indexer scores every compressed key block for every query as
//! `Σ_h w[t,h] · ReLU(q[t,h] · K[s])` and keeps the `k` best legal blocks
//! per query. [`driver::run_chunked`] does this over `(c_S, c_T)` tiles with
//! a running top-k buffer, so transient memory depends only on the tile
//! sizes; [`driver::run_materialize`] builds the full score matrix and is
//! the reference it must match exactly.

pub mod causal;
pub mod driver;
pub mod error;
pub mod ledger;
pub mod memory;
pub mod recall;
pub mod score;
pub mod synth;
pub mod topk;
pub mod types;

pub use causal::{k_eff, mask_tile, t_legal, MaskTile};
pub use driver::{
    dispatch, run_chunked, run_chunked_with_stats, run_materialize, Ablation, ChunkedRun, DispatchDecision,
    DriverConfig, ExecutionPath, MaskMode,
};
pub use error::{IndexerError, Result};
pub use ledger::{Charge, LedgerEvent, MemoryLedger};
pub use memory::{chunk_tile_bytes, materialize_bytes};
pub use recall::{recall, RecallReport};
pub use score::{score_tile, AccumulationMode, ScoreTile};
pub use synth::{generate, StreamIds, SyntheticSpec};
pub use topk::{merge_topk, oracle_topk, streaming_topk, succ_order, tile_topk, ScoredIndex, TileTopK};
pub use types::{IndexerInputs, ProblemDims, TileConfig, TopKBuffer, TopKResult, SENTINEL};

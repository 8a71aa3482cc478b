//! Criterion benchmarks for `indexer-core` live under `benches/`.

//! Synthetic indexer inputs with post-projection per-element variance.
//!
//! `q` and `K_C` are i.i.d. `N(0, 1/d_h)`; head weights are i.i.d.
//! `N(0, 1/(d_h · H_I))`. Each tensor draws from its own ChaCha20 stream
//! under one seed, so the output is bit-identical across runs and
//! platforms and changing one stream leaves the other tensors untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::types::{IndexerInputs, ProblemDims};

/// ChaCha20 stream number of each tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamIds {
    pub q: u64,
    pub keys: u64,
    pub weights: u64,
}

impl Default for StreamIds {
    fn default() -> Self {
        Self {
            q: 0,
            keys: 1,
            weights: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SyntheticSpec {
    pub dims: ProblemDims,
    /// Model hidden size the weight projection would read from. Recorded
    /// for provenance; the weights are drawn directly at their output scale.
    pub hidden: usize,
    pub seed: u64,
    pub streams: StreamIds,
}

impl SyntheticSpec {
    pub const DEFAULT_HIDDEN: usize = 4096;

    pub fn new(dims: ProblemDims, seed: u64) -> Self {
        Self {
            dims,
            hidden: Self::DEFAULT_HIDDEN,
            seed,
            streams: StreamIds::default(),
        }
    }
}

fn draw(seed: u64, stream: u64, n: usize, std_dev: f64) -> Vec<f32> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0f64, std_dev).expect("finite positive std dev");
    (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<IndexerInputs> {
    let d = &spec.dims;
    let dh = d.head_dim() as f64;
    let qk_std = (1.0 / dh).sqrt();
    let w_std = (1.0 / (dh * d.heads() as f64)).sqrt();
    IndexerInputs::new(
        *d,
        draw(spec.seed, spec.streams.q, d.q_len(), qk_std),
        draw(spec.seed, spec.streams.keys, d.keys_len(), qk_std),
        draw(spec.seed, spec.streams.weights, d.weights_len(), w_std),
    )
}

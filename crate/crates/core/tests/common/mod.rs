#![allow(dead_code)]

use indexer_core::{generate, IndexerInputs, ProblemDims, SyntheticSpec};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Scalar triple-loop score oracle over the full `[B, S, T]` matrix:
/// ascending d inside each head, ascending h across heads, no tiling.
pub fn oracle_scores(inputs: &IndexerInputs) -> Vec<f32> {
    let d = inputs.dims();
    let (bn, sn, tn, hn, dn) = (d.batch(), d.seq(), d.blocks(), d.heads(), d.head_dim());
    let (q, k, w) = (inputs.q(), inputs.keys(), inputs.weights());
    let mut out = vec![0.0f32; bn * sn * tn];
    for b in 0..bn {
        for s in 0..sn {
            for t in 0..tn {
                let mut acc = 0.0f32;
                for h in 0..hn {
                    let mut dot = 0.0f32;
                    for x in 0..dn {
                        dot += q[((b * sn + s) * hn + h) * dn + x] * k[(b * tn + t) * dn + x];
                    }
                    acc += w[(b * sn + s) * hn + h] * dot.max(0.0);
                }
                out[(b * sn + s) * tn + t] = acc;
            }
        }
    }
    out
}

/// Random small problem: S <= 512, T <= 128, H_I <= 8.
pub fn random_dims(r: &mut StdRng) -> ProblemDims {
    let ratio = [1usize, 2, 4, 4, 8][r.random_range(0..5)];
    let max_blocks = (512 / ratio).min(128);
    let blocks = r.random_range(1..=max_blocks);
    let k = match r.random_range(0..4) {
        0 => r.random_range(1..=4),
        1 => r.random_range(1..=blocks),
        2 => blocks + r.random_range(0..8),
        _ => r.random_range(1..=32),
    };
    ProblemDims::new(
        r.random_range(1..=2),
        blocks * ratio,
        r.random_range(1..=8),
        r.random_range(1..=16),
        ratio,
        k,
    )
    .unwrap()
}

/// Synthetic inputs with manufactured exact ties: some key rows are copies
/// of earlier ones, so distinct blocks share a score for every query.
pub fn inputs_with_ties(dims: ProblemDims, seed: u64, r: &mut StdRng) -> IndexerInputs {
    let base = generate(&SyntheticSpec::new(dims, seed)).unwrap();
    let dh = dims.head_dim();
    let mut keys = base.keys().to_vec();
    let blocks = dims.blocks();
    if blocks > 1 {
        for b in 0..dims.batch() {
            for _ in 0..r.random_range(0..=blocks / 2) {
                let src = r.random_range(0..blocks);
                let dst = r.random_range(0..blocks);
                let (s, d) = ((b * blocks + src) * dh, (b * blocks + dst) * dh);
                let row: Vec<f32> = keys[s..s + dh].to_vec();
                keys[d..d + dh].copy_from_slice(&row);
            }
        }
    }
    IndexerInputs::new(dims, base.q().to_vec(), keys, base.weights().to_vec()).unwrap()
}

/// Random tile sizes, biased toward edge cases (1, full extent, < k).
pub fn random_tile(r: &mut StdRng, dims: &ProblemDims) -> (usize, usize) {
    let (s, t, k) = (dims.seq(), dims.blocks(), dims.topk());
    let cs = match r.random_range(0..4) {
        0 => 1,
        1 => s,
        2 => s + r.random_range(1..64),
        _ => r.random_range(1..=s),
    };
    let ct = match r.random_range(0..5) {
        0 => 1,
        1 => t,
        2 => (k.saturating_sub(1)).clamp(1, t),
        3 => t + r.random_range(1..64),
        _ => r.random_range(1..=t),
    };
    (cs, ct)
}

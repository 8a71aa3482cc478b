//! Flat binary dump of indexer inputs.
//!
//! Layout, all little-endian:
//!
//! | offset | field                      |
//! |--------|----------------------------|
//! | 0      | magic `b"CSAI"`            |
//! | 4      | version (u32, currently 1) |
//! | 8      | batch (u32)                |
//! | 12     | seq (u32)                  |
//! | 16     | blocks (u32)               |
//! | 20     | heads (u32)                |
//! | 24     | head_dim (u32)             |
//! | 28     | ratio (u32)                |
//! | 32     | `q`, then keys, then weights as f32 |

use std::io::{self, Read, Write};

use indexer_core::{IndexerInputs, ProblemDims};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"CSAI";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 32;

#[derive(Debug, Error)]
pub enum BinError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("dimension {0} does not fit in u32")]
    TooLarge(&'static str),
    #[error("header blocks {header} disagree with seq / ratio = {derived}")]
    Blocks { header: usize, derived: usize },
    #[error(transparent)]
    Inputs(#[from] indexer_core::IndexerError),
}

fn u32_field(name: &'static str, v: usize) -> Result<u32, BinError> {
    u32::try_from(v).map_err(|_| BinError::TooLarge(name))
}

pub fn header(dims: &ProblemDims) -> Result<[u8; HEADER_BYTES], BinError> {
    let mut h = [0u8; HEADER_BYTES];
    h[0..4].copy_from_slice(&MAGIC);
    let fields = [
        VERSION,
        u32_field("batch", dims.batch())?,
        u32_field("seq", dims.seq())?,
        u32_field("blocks", dims.blocks())?,
        u32_field("heads", dims.heads())?,
        u32_field("head_dim", dims.head_dim())?,
        u32_field("ratio", dims.ratio())?,
    ];
    for (n, f) in fields.iter().enumerate() {
        h[4 + 4 * n..8 + 4 * n].copy_from_slice(&f.to_le_bytes());
    }
    Ok(h)
}

pub fn write_inputs<W: Write>(mut w: W, inputs: &IndexerInputs) -> Result<(), BinError> {
    w.write_all(&header(inputs.dims())?)?;
    for tensor in [inputs.q(), inputs.keys(), inputs.weights()] {
        let mut bytes = Vec::with_capacity(tensor.len() * 4);
        for v in tensor {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, BinError> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Reads a dump back. The file carries no top-k target, so the returned
/// inputs report `topk = 1`; use [`ProblemDims::with_topk`] as needed.
pub fn read_inputs<R: Read>(mut r: R) -> Result<IndexerInputs, BinError> {
    let mut h = [0u8; HEADER_BYTES];
    r.read_exact(&mut h)?;
    let magic = [h[0], h[1], h[2], h[3]];
    if magic != MAGIC {
        return Err(BinError::Magic(magic));
    }
    let field = |n: usize| u32::from_le_bytes([h[4 + 4 * n], h[5 + 4 * n], h[6 + 4 * n], h[7 + 4 * n]]) as usize;
    if field(0) as u32 != VERSION {
        return Err(BinError::Version(field(0) as u32));
    }
    let dims = ProblemDims::new(field(1), field(2), field(4), field(5), field(6), 1)?;
    if dims.blocks() != field(3) {
        return Err(BinError::Blocks {
            header: field(3),
            derived: dims.blocks(),
        });
    }
    let q = read_f32s(&mut r, dims.q_len())?;
    let keys = read_f32s(&mut r, dims.keys_len())?;
    let weights = read_f32s(&mut r, dims.weights_len())?;
    Ok(IndexerInputs::new(dims, q, keys, weights)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use indexer_core::{generate, SyntheticSpec};

    #[test]
    fn header_layout() {
        let dims = ProblemDims::new(2, 16, 3, 8, 4, 5).unwrap();
        let h = header(&dims).unwrap();
        assert_eq!(&h[0..4], b"CSAI");
        assert_eq!(&h[4..8], &1u32.to_le_bytes());
        assert_eq!(&h[16..20], &4u32.to_le_bytes());
        assert_eq!(&h[28..32], &4u32.to_le_bytes());
    }

    #[test]
    fn roundtrip() {
        let dims = ProblemDims::new(2, 16, 3, 8, 4, 5).unwrap();
        let inputs = generate(&SyntheticSpec::new(dims, 1)).unwrap();
        let mut buf = Vec::new();
        write_inputs(&mut buf, &inputs).unwrap();
        assert_eq!(buf.len(), HEADER_BYTES + 4 * (dims.q_len() + dims.keys_len() + dims.weights_len()));
        let back = read_inputs(buf.as_slice()).unwrap();
        assert_eq!(back.q(), inputs.q());
        assert_eq!(back.keys(), inputs.keys());
        assert_eq!(back.weights(), inputs.weights());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dims = ProblemDims::new(1, 4, 1, 2, 2, 1).unwrap();
        let inputs = generate(&SyntheticSpec::new(dims, 1)).unwrap();
        let mut buf = Vec::new();
        write_inputs(&mut buf, &inputs).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_inputs(bad.as_slice()), Err(BinError::Magic(_))));
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_inputs(buf.as_slice()), Err(BinError::Io(_))));
    }
}

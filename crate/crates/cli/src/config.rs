//! Run settings: built-in defaults, overridden by a key-value config file,
//! overridden by command-line flags.
//!
//! Defaults follow the V4-Flash indexer (64 heads of width 128, ratio 4,
//! top-512) at S = 2048, with tiles scaled to (256, 128) so the default
//! run has several tiles on both axes.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexer_core::{Ablation, AccumulationMode, DriverConfig, ProblemDims, TileConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {key}: {value}")]
    Value { key: &'static str, value: String },
    #[error(transparent)]
    Dims(#[from] indexer_core::IndexerError),
}

pub const GIB: u64 = 1 << 30;
/// Device budget for the memory model: 140 GiB.
pub const DEFAULT_BUDGET_BYTES: u64 = 140 * GIB;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Cs,
    Ct,
    K,
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cs" | "c_s" => Ok(Self::Cs),
            "ct" | "c_t" => Ok(Self::Ct),
            "k" | "topk" => Ok(Self::K),
            other => Err(format!("unknown sweep axis {other:?} (expected cs, ct or k)")),
        }
    }
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cs => "cs",
            Self::Ct => "ct",
            Self::K => "k",
        }
    }
}

pub fn parse_mode(s: &str) -> Result<AccumulationMode, String> {
    match s {
        "fp32" => Ok(AccumulationMode::Fp32),
        "fp16" => Ok(AccumulationMode::Fp16Emulated),
        other => Err(format!("unknown mode {other:?} (expected fp32 or fp16)")),
    }
}

pub fn mode_name(mode: AccumulationMode) -> &'static str {
    match mode {
        AccumulationMode::Fp32 => "fp32",
        AccumulationMode::Fp16Emulated => "fp16",
    }
}

pub fn parse_ablation(s: &str) -> Result<Ablation, String> {
    match s {
        "none" => Ok(Ablation::None),
        "a1" => Ok(Ablation::NoMerge),
        "a2" => Ok(Ablation::SkipSaturated),
        other => Err(format!("unknown ablation {other:?} (expected none, a1 or a2)")),
    }
}

pub fn ablation_name(a: Ablation) -> &'static str {
    match a {
        Ablation::None => "none",
        Ablation::NoMerge => "a1",
        Ablation::SkipSaturated => "a2",
    }
}

/// Comma-separated list of unsigned integers.
pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

/// Every setting as optional, for layering file values and flags.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub batch: Option<usize>,
    pub seq: Option<usize>,
    pub heads: Option<usize>,
    pub head_dim: Option<usize>,
    pub ratio: Option<usize>,
    pub topk: Option<usize>,
    pub cs: Option<usize>,
    pub ct: Option<usize>,
    pub mode: Option<String>,
    pub ablation: Option<String>,
    pub seed: Option<u64>,
    pub hidden: Option<usize>,
    pub budget_bytes: Option<u64>,
    pub threshold_bytes: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel: Option<bool>,
    pub causal_skip: Option<bool>,
    pub axis: Option<String>,
    pub values: Option<String>,
    pub recall_seq: Option<usize>,
    pub seqs: Option<String>,
    pub a2_ct: Option<usize>,
}

macro_rules! layer {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_str_named(&text, path)
    }

    pub fn from_str_named(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    /// Fields set in `top` win over fields set in `self`.
    pub fn layered(mut self, top: &Overrides) -> Self {
        layer!(
            self, top, batch, seq, heads, head_dim, ratio, topk, cs, ct, mode, ablation, seed, hidden,
            budget_bytes, threshold_bytes, out, parallel, causal_skip, axis, values, recall_seq, seqs, a2_ct
        );
        self
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ratio: usize,
    pub topk: usize,
    pub cs: usize,
    pub ct: usize,
    pub mode: AccumulationMode,
    pub ablation: Ablation,
    pub seed: u64,
    pub hidden: usize,
    pub budget_bytes: u64,
    pub threshold_bytes: u64,
    pub out: Option<PathBuf>,
    pub parallel: bool,
    pub causal_skip: bool,
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub recall_seq: usize,
    pub seqs: Vec<usize>,
    pub a2_ct: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            batch: 1,
            seq: 2048,
            heads: 64,
            head_dim: 128,
            ratio: 4,
            topk: 512,
            cs: 256,
            ct: 128,
            mode: AccumulationMode::Fp32,
            ablation: Ablation::None,
            seed: 0,
            hidden: 4096,
            budget_bytes: DEFAULT_BUDGET_BYTES,
            threshold_bytes: DriverConfig::DEFAULT_THRESHOLD_BYTES,
            out: None,
            parallel: false,
            causal_skip: false,
            axis: SweepAxis::Ct,
            values: vec![32, 64, 128, 256, 512],
            recall_seq: 1024,
            seqs: vec![32_768, 65_536, 131_072, 262_144, 524_288, 1_048_576],
            a2_ct: None,
        }
    }
}

impl Settings {
    pub fn resolve(o: &Overrides) -> Result<Self, ConfigError> {
        let d = Settings::default();
        let value_err = |key: &'static str| move |value: String| ConfigError::Value { key, value };
        Ok(Self {
            batch: o.batch.unwrap_or(d.batch),
            seq: o.seq.unwrap_or(d.seq),
            heads: o.heads.unwrap_or(d.heads),
            head_dim: o.head_dim.unwrap_or(d.head_dim),
            ratio: o.ratio.unwrap_or(d.ratio),
            topk: o.topk.unwrap_or(d.topk),
            cs: o.cs.unwrap_or(d.cs),
            ct: o.ct.unwrap_or(d.ct),
            mode: o.mode.as_deref().map(parse_mode).transpose().map_err(value_err("mode"))?.unwrap_or(d.mode),
            ablation: o
                .ablation
                .as_deref()
                .map(parse_ablation)
                .transpose()
                .map_err(value_err("ablation"))?
                .unwrap_or(d.ablation),
            seed: o.seed.unwrap_or(d.seed),
            hidden: o.hidden.unwrap_or(d.hidden),
            budget_bytes: o.budget_bytes.unwrap_or(d.budget_bytes),
            threshold_bytes: o.threshold_bytes.unwrap_or(d.threshold_bytes),
            out: o.out.clone().or(d.out),
            parallel: o.parallel.unwrap_or(d.parallel),
            causal_skip: o.causal_skip.unwrap_or(d.causal_skip),
            axis: o.axis.as_deref().map(str::parse).transpose().map_err(value_err("axis"))?.unwrap_or(d.axis),
            values: o.values.as_deref().map(parse_list).transpose().map_err(value_err("values"))?.unwrap_or(d.values),
            recall_seq: o.recall_seq.unwrap_or(d.recall_seq),
            seqs: o.seqs.as_deref().map(parse_list).transpose().map_err(value_err("seqs"))?.unwrap_or(d.seqs),
            a2_ct: o.a2_ct.or(d.a2_ct),
        })
    }

    pub fn dims(&self) -> Result<ProblemDims, ConfigError> {
        Ok(ProblemDims::new(self.batch, self.seq, self.heads, self.head_dim, self.ratio, self.topk)?)
    }

    pub fn tile(&self) -> Result<TileConfig, ConfigError> {
        Ok(TileConfig::new(self.cs, self.ct)?)
    }

    pub fn driver(&self) -> Result<DriverConfig, ConfigError> {
        let mut cfg = DriverConfig::new(self.tile()?);
        cfg.mode = self.mode;
        cfg.ablation = self.ablation;
        cfg.auto_threshold_bytes = self.threshold_bytes;
        cfg.parallel = self.parallel;
        cfg.causal_skip = self.causal_skip;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let file = Overrides::from_str_named(
            "seq = 1024\nheads = 8\nmode = \"fp16\"\nvalues = \"16, 64\"\n",
            Path::new("test.cfg"),
        )
        .unwrap();
        let flags = Overrides {
            seq: Some(512),
            ..Overrides::default()
        };
        let s = Settings::resolve(&file.layered(&flags)).unwrap();
        assert_eq!(s.seq, 512);
        assert_eq!(s.heads, 8);
        assert_eq!(s.head_dim, 128);
        assert_eq!(s.mode, AccumulationMode::Fp16Emulated);
        assert_eq!(s.values, vec![16, 64]);
    }

    #[test]
    fn unknown_keys_and_values_rejected() {
        assert!(Overrides::from_str_named("sequence = 3\n", Path::new("x")).is_err());
        let bad = Overrides {
            mode: Some("bf16".into()),
            ..Overrides::default()
        };
        assert!(matches!(Settings::resolve(&bad), Err(ConfigError::Value { key: "mode", .. })));
    }

    #[test]
    fn axis_names() {
        assert_eq!("ct".parse::<SweepAxis>().unwrap(), SweepAxis::Ct);
        assert!("x".parse::<SweepAxis>().is_err());
    }
}

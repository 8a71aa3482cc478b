//! The harness commands. Each returns its CSV rows, a pass/fail gate and
//! human-readable summary lines; `main` handles printing and exit codes.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use indexer_core::memory::{
    chunked_peak_bound, reference_working_set_bytes, running_buffer_bytes, score_matrix_bytes,
};
use indexer_core::{
    chunk_tile_bytes, generate, materialize_bytes, recall, run_chunked, run_chunked_with_stats, run_materialize,
    t_legal, Ablation, AccumulationMode, DriverConfig, IndexerError, IndexerInputs, MemoryLedger, ProblemDims,
    RecallReport, SyntheticSpec, TileConfig, TopKResult,
};
use serde::Serialize;
use thiserror::Error;

use crate::binfile::{self, BinError};
use crate::config::{ablation_name, mode_name, ConfigError, Settings, SweepAxis, GIB};

/// Largest `[B, S, T]` score matrix the reference path may allocate.
pub const ORACLE_LIMIT_BYTES: u64 = GIB;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Indexer(#[from] IndexerError),
    #[error(
        "refusing to run the materialize reference: its score matrix needs {matrix_bytes} bytes \
         (limit {ORACLE_LIMIT_BYTES}); the per-head intermediate would be {intermediate_bytes} bytes"
    )]
    OracleTooLarge { matrix_bytes: u64, intermediate_bytes: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Bin(#[from] BinError),
}

impl CommandError {
    /// Usage and configuration problems exit with 2; so does everything
    /// else that is not a gate verdict.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone)]
pub struct Outcome<R> {
    pub rows: Vec<R>,
    pub passed: bool,
    pub summary: Vec<String>,
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CommandError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn inputs_for(s: &Settings, dims: ProblemDims) -> Result<IndexerInputs, CommandError> {
    let mut spec = SyntheticSpec::new(dims, s.seed);
    spec.hidden = s.hidden;
    Ok(generate(&spec)?)
}

fn check_oracle_size(dims: &ProblemDims) -> Result<(), CommandError> {
    let matrix_bytes = score_matrix_bytes(dims)?;
    if matrix_bytes > ORACLE_LIMIT_BYTES {
        return Err(CommandError::OracleTooLarge {
            matrix_bytes,
            intermediate_bytes: materialize_bytes(dims)?,
        });
    }
    Ok(())
}

fn reference(inputs: &IndexerInputs, dims: &ProblemDims) -> Result<TopKResult, CommandError> {
    check_oracle_size(dims)?;
    Ok(run_materialize(inputs, dims, AccumulationMode::Fp32, &MemoryLedger::new())?)
}

fn fmt_report(r: &RecallReport) -> String {
    format!(
        "mean {:.4}  min {:.4}  rows=1 {:.2}%  rows<.99 {:.3}%",
        r.mean, r.min, r.pct_rows_perfect, r.pct_rows_below_99
    )
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ParityRow {
    pub batch: usize,
    pub seq: usize,
    pub blocks: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ratio: usize,
    pub topk: usize,
    pub cs: usize,
    pub ct: usize,
    pub mode: &'static str,
    pub ablation: &'static str,
    pub seed: u64,
    pub rows: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub pct_rows_perfect: f64,
    pub pct_rows_below_99: f64,
    pub verdict: &'static str,
}

/// Chunked path (as configured) against the FP32 materialize reference,
/// gated on mean = min = 1.
pub fn parity(s: &Settings) -> Result<Outcome<ParityRow>, CommandError> {
    let dims = s.dims()?;
    check_oracle_size(&dims)?;
    let config = s.driver()?;
    let inputs = inputs_for(s, dims)?;

    let started = Instant::now();
    let chunked = run_chunked(&inputs, &dims, &config, &MemoryLedger::new())?;
    let chunk_time = started.elapsed();
    let started = Instant::now();
    let reference = reference(&inputs, &dims)?;
    let ref_time = started.elapsed();

    let report = recall(&reference, &chunked)?;
    let passed = report.is_exact();
    let verdict = if passed { "PASS" } else { "FAIL" };
    let row = ParityRow {
        batch: dims.batch(),
        seq: dims.seq(),
        blocks: dims.blocks(),
        heads: dims.heads(),
        head_dim: dims.head_dim(),
        ratio: dims.ratio(),
        topk: dims.topk(),
        cs: s.cs,
        ct: s.ct,
        mode: mode_name(s.mode),
        ablation: ablation_name(s.ablation),
        seed: s.seed,
        rows: report.per_row.len(),
        mean_recall: report.mean,
        min_recall: report.min,
        pct_rows_perfect: report.pct_rows_perfect,
        pct_rows_below_99: report.pct_rows_below_99,
        verdict,
    };
    let summary = vec![
        format!(
            "parity S={} T={} H_I={} d_h={} m={} k={} tiles=({}, {}) mode={} ablation={}",
            dims.seq(),
            dims.blocks(),
            dims.heads(),
            dims.head_dim(),
            dims.ratio(),
            dims.topk(),
            s.cs,
            s.ct,
            row.mode,
            row.ablation
        ),
        format!("  {}", fmt_report(&report)),
        format!(
            "  chunked {:.2}s, materialize {:.2}s",
            chunk_time.as_secs_f64(),
            ref_time.as_secs_f64()
        ),
        format!("  {verdict}"),
    ];
    Ok(Outcome {
        rows: vec![row],
        passed,
        summary,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: usize,
    pub seq: usize,
    pub blocks: usize,
    pub cs: usize,
    pub ct: usize,
    pub topk: usize,
    pub dispatch_count: u64,
    pub grid_tiles: u64,
    pub skipped_tiles: u64,
    pub peak_bytes: u64,
    pub peak_bound_bytes: u64,
    pub tile_bytes: u64,
    pub recall_seq: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub pct_rows_perfect: f64,
    pub pct_rows_below_99: f64,
}

/// One row per swept value: dispatch count and ledger peak at `seq`,
/// recall against the reference at `recall_seq`.
pub fn sweep(s: &Settings) -> Result<Outcome<SweepRow>, CommandError> {
    let base = s.dims()?;
    let recall_seq = s.recall_seq.min(base.seq());
    let recall_base = base.with_seq(recall_seq)?;
    check_oracle_size(&recall_base)?;
    let inputs = inputs_for(s, base)?;
    let recall_inputs = inputs_for(s, recall_base)?;

    let mut rows = Vec::new();
    let mut summary = vec![format!(
        "sweep {} over {:?} at S={} (recall at S={})",
        s.axis.name(),
        s.values,
        base.seq(),
        recall_seq
    )];
    let mut passed = true;
    for &value in &s.values {
        let (cs, ct, k) = match s.axis {
            SweepAxis::Cs => (value, s.ct, s.topk),
            SweepAxis::Ct => (s.cs, value, s.topk),
            SweepAxis::K => (s.cs, s.ct, value),
        };
        let dims = base.with_topk(k)?;
        let tile = TileConfig::new(cs, ct)?;
        let mut config = s.driver()?;
        config.tile = tile;
        // Ledger peaks are only specified for the sequential driver.
        config.parallel = false;

        let ledger = MemoryLedger::new();
        let started = Instant::now();
        let run = run_chunked_with_stats(&inputs, &dims, &config, &ledger)?;
        let elapsed = started.elapsed();

        let (ecs, ect) = tile.clamped(&dims);
        let grid = tile.dispatch_count(&dims);
        let bound = chunked_peak_bound(dims.batch(), ecs, ect, k, false)?;

        let rdims = recall_base.with_topk(k)?;
        let reference = reference(&recall_inputs, &rdims)?;
        let tested = run_chunked(&recall_inputs, &rdims, &config, &MemoryLedger::new())?;
        let report = recall(&reference, &tested)?;

        let mut ok = run.dispatch_count + run.skipped_tiles == grid && ledger.peak_bytes() <= bound;
        if s.mode == AccumulationMode::Fp32 && s.ablation == Ablation::None {
            ok &= report.is_exact();
        }
        passed &= ok;
        summary.push(format!(
            "  {}={:<8} dispatches {:>8}  peak {:>12} B  {}  {:.3}s{}",
            s.axis.name(),
            value,
            run.dispatch_count,
            ledger.peak_bytes(),
            fmt_report(&report),
            elapsed.as_secs_f64(),
            if ok { "" } else { "  FAIL" }
        ));
        rows.push(SweepRow {
            axis: s.axis.name(),
            value,
            seq: dims.seq(),
            blocks: dims.blocks(),
            cs,
            ct,
            topk: k,
            dispatch_count: run.dispatch_count,
            grid_tiles: grid,
            skipped_tiles: run.skipped_tiles,
            peak_bytes: ledger.peak_bytes(),
            peak_bound_bytes: bound,
            tile_bytes: chunk_tile_bytes(dims.batch(), ecs, ect)?,
            recall_seq,
            mean_recall: report.mean,
            min_recall: report.min,
            pct_rows_perfect: report.pct_rows_perfect,
            pct_rows_below_99: report.pct_rows_below_99,
        });
    }
    summary.push(format!("  {}", if passed { "PASS" } else { "FAIL" }));
    Ok(Outcome { rows, passed, summary })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AblationRow {
    pub variant: &'static str,
    pub ct: usize,
    pub mode: &'static str,
    pub ablation: &'static str,
    pub dispatch_count: u64,
    pub rows: usize,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub pct_rows_perfect: f64,
    pub pct_rows_below_99: f64,
}

/// Named directional checks over the ablation rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationChecks {
    /// A2 with every tile narrower than k recovers nothing on any row
    /// that has a legal block. `None` when the A2 tile is not narrower than k.
    pub skip_saturated_zero: Option<bool>,
    pub control_exact: bool,
    pub no_merge_partial: bool,
    pub fp16_loses_rows: bool,
}

impl AblationChecks {
    pub fn all_pass(&self) -> bool {
        self.skip_saturated_zero.unwrap_or(true) && self.control_exact && self.no_merge_partial && self.fp16_loses_rows
    }
}

pub struct AblationOutcome {
    pub outcome: Outcome<AblationRow>,
    pub reports: Vec<(&'static str, RecallReport)>,
    pub checks: AblationChecks,
}

/// Production, A1, A2, A2-control and A3 against one FP32 reference.
pub fn ablate(s: &Settings) -> Result<AblationOutcome, CommandError> {
    let dims = s.dims()?;
    let inputs = inputs_for(s, dims)?;
    let reference = reference(&inputs, &dims)?;
    let k = dims.topk();
    let a2_ct = s.a2_ct.unwrap_or((k / 2).max(1));

    let variants: [(&'static str, usize, AccumulationMode, Ablation); 5] = [
        ("production", s.ct, AccumulationMode::Fp32, Ablation::None),
        ("a1_no_merge", s.ct, AccumulationMode::Fp32, Ablation::NoMerge),
        ("a2_skip_saturated", a2_ct, AccumulationMode::Fp32, Ablation::SkipSaturated),
        ("a2_control", a2_ct, AccumulationMode::Fp32, Ablation::None),
        ("a3_fp16", s.ct, AccumulationMode::Fp16Emulated, Ablation::None),
    ];

    let tiles = dims.blocks().div_ceil(s.ct.min(dims.blocks()));
    let mut summary = vec![format!(
        "ablate S={} T={} H_I={} d_h={} k={} c_S={} c_T={} ({} key tiles) A2 c_T={}",
        dims.seq(),
        dims.blocks(),
        dims.heads(),
        dims.head_dim(),
        k,
        s.cs,
        s.ct,
        tiles,
        a2_ct
    )];
    if tiles < 4 {
        summary.push("  note: fewer than 4 key tiles; A1 may not degrade".into());
    }

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (variant, ct, mode, ablation) in variants {
        let mut config = DriverConfig::new(TileConfig::new(s.cs, ct)?);
        config.mode = mode;
        config.ablation = ablation;
        config.parallel = s.parallel;
        let run = run_chunked_with_stats(&inputs, &dims, &config, &MemoryLedger::new())?;
        let report = recall(&reference, &run.result)?;
        summary.push(format!("  {variant:<18} c_T={ct:<6} {}", fmt_report(&report)));
        rows.push(AblationRow {
            variant,
            ct,
            mode: mode_name(mode),
            ablation: ablation_name(ablation),
            dispatch_count: run.dispatch_count,
            rows: report.per_row.len(),
            mean_recall: report.mean,
            min_recall: report.min,
            pct_rows_perfect: report.pct_rows_perfect,
            pct_rows_below_99: report.pct_rows_below_99,
        });
        reports.push((variant, report));
    }

    let get = |name: &str| &reports.iter().find(|(n, _)| *n == name).unwrap().1;
    let production = get("production");
    let a1 = get("a1_no_merge");
    let a2 = get("a2_skip_saturated");
    let ctrl = get("a2_control");
    let a3 = get("a3_fp16");
    let checks = AblationChecks {
        skip_saturated_zero: (a2_ct < k).then(|| a2.per_row.iter().all(|&r| r == 0.0)),
        control_exact: ctrl.mean == 1.0,
        no_merge_partial: a1.mean > 0.0 && a1.mean < 1.0,
        fp16_loses_rows: a3.pct_rows_perfect < production.pct_rows_perfect && a3.mean >= 0.99,
    };
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    summary.push(format!(
        "  a2 recall 0 on legal rows: {}",
        checks.skip_saturated_zero.map_or("n/a (A2 tile not narrower than k)", mark)
    ));
    summary.push(format!("  a2 control exact: {}", mark(checks.control_exact)));
    summary.push(format!("  a1 strictly partial: {}", mark(checks.no_merge_partial)));
    summary.push(format!("  a3 loses perfect rows, mean >= 0.99: {}", mark(checks.fp16_loses_rows)));
    let passed = checks.all_pass();
    summary.push(format!("  {}", if passed { "PASS" } else { "FAIL" }));

    Ok(AblationOutcome {
        outcome: Outcome { rows, passed, summary },
        reports,
        checks,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MemRow {
    pub seq: usize,
    pub blocks: usize,
    pub materialize_bytes: u64,
    pub materialize_gib: f64,
    pub reference_working_set_bytes: u64,
    pub chunk_tile_bytes: u64,
    pub running_buffer_bytes: u64,
    pub chunked_peak_bound_bytes: u64,
    pub budget_bytes: u64,
    pub materialize: &'static str,
}

/// Analytic byte counts per sequence length. A row is flagged `OOM` when
/// the per-head intermediate exceeds the device budget.
pub fn memmodel(s: &Settings) -> Result<Outcome<MemRow>, CommandError> {
    let mut rows = Vec::new();
    let mut summary = vec![format!(
        "memmodel H_I={} d_h={} m={} k={} tiles=({}, {}) budget {:.2} GiB",
        s.heads,
        s.head_dim,
        s.ratio,
        s.topk,
        s.cs,
        s.ct,
        s.budget_bytes as f64 / GIB as f64
    )];
    for &seq in &s.seqs {
        let dims = ProblemDims::new(s.batch, seq, s.heads, s.head_dim, s.ratio, s.topk)?;
        let (cs, ct) = TileConfig::new(s.cs, s.ct)?.clamped(&dims);
        let mat = materialize_bytes(&dims)?;
        let fits = mat <= s.budget_bytes;
        let row = MemRow {
            seq,
            blocks: dims.blocks(),
            materialize_bytes: mat,
            materialize_gib: mat as f64 / GIB as f64,
            reference_working_set_bytes: reference_working_set_bytes(&dims)?,
            chunk_tile_bytes: chunk_tile_bytes(dims.batch(), cs, ct)?,
            running_buffer_bytes: running_buffer_bytes(dims.batch(), cs, dims.topk())?,
            chunked_peak_bound_bytes: chunked_peak_bound(dims.batch(), cs, ct, dims.topk(), false)?,
            budget_bytes: s.budget_bytes,
            materialize: if fits { "fits" } else { "OOM" },
        };
        summary.push(format!(
            "  S={:<9} T={:<8} intermediate {:>10.2} GiB  reference set {:>10.2} GiB  chunk peak {:>8.2} MiB  {}",
            seq,
            row.blocks,
            row.materialize_gib,
            row.reference_working_set_bytes as f64 / GIB as f64,
            row.chunked_peak_bound_bytes as f64 / (1u64 << 20) as f64,
            row.materialize
        ));
        rows.push(row);
    }
    Ok(Outcome {
        rows,
        passed: true,
        summary,
    })
}

/// Writes synthetic inputs to `path` in the flat binary format.
pub fn gen(s: &Settings, path: &Path) -> Result<Outcome<()>, CommandError> {
    let dims = s.dims()?;
    let inputs = inputs_for(s, dims)?;
    binfile::write_inputs(BufWriter::new(File::create(path)?), &inputs)?;
    Ok(Outcome {
        rows: Vec::new(),
        passed: true,
        summary: vec![format!(
            "wrote {} (B={} S={} T={} H_I={} d_h={} seed={})",
            path.display(),
            dims.batch(),
            dims.seq(),
            dims.blocks(),
            dims.heads(),
            dims.head_dim(),
            s.seed
        )],
    })
}

/// Rows whose reference is empty (no legal block) are excluded from recall.
pub fn legal_rows(dims: &ProblemDims) -> usize {
    dims.batch() * (0..dims.seq()).filter(|&t| t_legal(t, dims.ratio()) > 0).count()
}

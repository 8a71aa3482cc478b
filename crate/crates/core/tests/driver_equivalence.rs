mod common;

use common::{inputs_with_ties, random_dims, random_tile, rng};
use indexer_core::memory::chunked_peak_bound;
use indexer_core::{
    generate, k_eff, recall, run_chunked, run_chunked_with_stats, run_materialize, t_legal, Ablation,
    AccumulationMode, DriverConfig, MaskMode, MemoryLedger, ProblemDims, SyntheticSpec, TileConfig,
};

fn config(cs: usize, ct: usize) -> DriverConfig {
    DriverConfig::new(TileConfig::new(cs, ct).unwrap())
}

#[test]
fn chunked_matches_materialize_on_reference_instance() {
    let dims = ProblemDims::new(2, 256, 4, 16, 4, 8).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 1)).unwrap();
    let reference = run_materialize(&inputs, &dims, AccumulationMode::Fp32, &MemoryLedger::new()).unwrap();
    let chunked = run_chunked(&inputs, &dims, &config(32, 16), &MemoryLedger::new()).unwrap();
    assert!(recall(&reference, &chunked).unwrap().is_exact());
    assert_eq!(chunked.indices(), reference.indices());
}

#[test]
fn random_instances_and_tilings_agree() {
    let mut r = rng(77);
    for case in 0..150 {
        let dims = random_dims(&mut r);
        let inputs = inputs_with_ties(dims, case, &mut r);
        let reference = run_materialize(&inputs, &dims, AccumulationMode::Fp32, &MemoryLedger::new()).unwrap();
        for _ in 0..3 {
            let (cs, ct) = random_tile(&mut r, &dims);
            let got = run_chunked(&inputs, &dims, &config(cs, ct), &MemoryLedger::new()).unwrap();
            assert_eq!(got.indices(), reference.indices(), "case {case} dims {dims:?} tile ({cs}, {ct})");
            assert_eq!(got.values(), reference.values());
        }
    }
}

#[test]
fn fp16_paths_agree_with_each_other() {
    let dims = ProblemDims::new(1, 128, 8, 32, 4, 6).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 4)).unwrap();
    let reference = run_materialize(&inputs, &dims, AccumulationMode::Fp16Emulated, &MemoryLedger::new()).unwrap();
    let mut cfg = config(16, 5);
    cfg.mode = AccumulationMode::Fp16Emulated;
    let got = run_chunked(&inputs, &dims, &cfg, &MemoryLedger::new()).unwrap();
    assert_eq!(got.indices(), reference.indices());
}

#[test]
fn parallel_skip_and_mask_modes_are_result_identical() {
    let dims = ProblemDims::new(2, 192, 3, 8, 2, 10).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 8)).unwrap();
    let base = run_chunked_with_stats(&inputs, &dims, &config(24, 7), &MemoryLedger::new()).unwrap();
    assert_eq!(base.dispatch_count, TileConfig::new(24, 7).unwrap().dispatch_count(&dims));

    let mut par = config(24, 7);
    par.parallel = true;
    assert_eq!(run_chunked(&inputs, &dims, &par, &MemoryLedger::new()).unwrap(), base.result);

    let mut skip = config(24, 7);
    skip.causal_skip = true;
    let skipped = run_chunked_with_stats(&inputs, &dims, &skip, &MemoryLedger::new()).unwrap();
    assert_eq!(skipped.result, base.result);
    assert!(skipped.skipped_tiles > 0);
    assert_eq!(skipped.dispatch_count + skipped.skipped_tiles, base.dispatch_count);

    let mut boolean = config(24, 7);
    boolean.mask = MaskMode::BooleanTile;
    assert_eq!(run_chunked(&inputs, &dims, &boolean, &MemoryLedger::new()).unwrap(), base.result);
}

#[test]
fn ledger_peak_within_bound_and_independent_of_seq() {
    let (cs, ct, k) = (32, 16, 8);
    let mut peaks = Vec::new();
    for seq in [256, 512, 1024] {
        let dims = ProblemDims::new(1, seq, 2, 8, 4, k).unwrap();
        let inputs = generate(&SyntheticSpec::new(dims, 2)).unwrap();
        for mask in [MaskMode::InPlace, MaskMode::BooleanTile] {
            let ledger = MemoryLedger::new();
            let mut cfg = config(cs, ct);
            cfg.mask = mask;
            run_chunked(&inputs, &dims, &cfg, &ledger).unwrap();
            let bound = chunked_peak_bound(1, cs, ct, k, mask == MaskMode::BooleanTile).unwrap();
            assert!(ledger.peak_bytes() <= bound);
            assert_eq!(ledger.live_bytes(), 0);
            if mask == MaskMode::InPlace {
                peaks.push(ledger.peak_bytes());
            }
        }
    }
    assert!(peaks.windows(2).all(|w| w[0] == w[1]), "{peaks:?}");
}

#[test]
fn skip_saturated_drops_every_narrow_tile() {
    let dims = ProblemDims::new(2, 256, 4, 16, 4, 8).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 1)).unwrap();
    let mut cfg = config(32, 4);
    cfg.ablation = Ablation::SkipSaturated;
    let run = run_chunked_with_stats(&inputs, &dims, &cfg, &MemoryLedger::new()).unwrap();
    assert_eq!(run.dispatch_count, 0);
    assert!(run.result.indices().iter().all(|&i| i == -1));
    let reference = run_materialize(&inputs, &dims, AccumulationMode::Fp32, &MemoryLedger::new()).unwrap();
    let report = recall(&reference, &run.result).unwrap();
    assert_eq!(report.mean, 0.0);
}

#[test]
fn no_merge_keeps_only_last_tile() {
    let dims = ProblemDims::new(1, 256, 4, 16, 4, 8).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 5)).unwrap();
    let mut cfg = config(256, 16);
    cfg.ablation = Ablation::NoMerge;
    let got = run_chunked(&inputs, &dims, &cfg, &MemoryLedger::new()).unwrap();
    // The last tile covers blocks 48..64, which only the final queries see.
    for t in 0..dims.seq() {
        let valid = got.valid(0, t);
        assert!(valid.iter().all(|&i| (48..64).contains(&i)));
        assert_eq!(valid.len(), k_eff(t, 4, 8).min(t_legal(t, 4).saturating_sub(48)));
    }
    let reference = run_materialize(&inputs, &dims, AccumulationMode::Fp32, &MemoryLedger::new()).unwrap();
    let report = recall(&reference, &got).unwrap();
    assert!(report.mean > 0.0 && report.mean < 1.0);
}

#[test]
fn large_k_returns_full_legal_range() {
    let dims = ProblemDims::new(1, 64, 2, 4, 4, 100).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 6)).unwrap();
    for result in [
        run_materialize(&inputs, &dims, AccumulationMode::Fp32, &MemoryLedger::new()).unwrap(),
        run_chunked(&inputs, &dims, &config(7, 3), &MemoryLedger::new()).unwrap(),
    ] {
        for t in 0..64 {
            let mut valid = result.valid(0, t).to_vec();
            valid.sort();
            assert_eq!(valid, (0..t_legal(t, 4) as i64).collect::<Vec<_>>());
        }
    }
}

#[test]
fn single_block_selection() {
    // S = m, T = 1, k = 1: only the last query sees block 0.
    let dims = ProblemDims::new(1, 4, 1, 2, 4, 1).unwrap();
    let inputs = generate(&SyntheticSpec::new(dims, 3)).unwrap();
    let out = run_materialize(&inputs, &dims, AccumulationMode::Fp32, &MemoryLedger::new()).unwrap();
    assert_eq!(out.indices(), &[-1, -1, -1, 0]);
}

//! End-to-end harness behavior: record shapes, determinism, resume
//! semantics, and the streaming-vs-oracle dictionary comparison.

use squeak::dataset::blocks_effective_dimension;
use squeak::rls::{effective_dimension, exact_rls};
use squeak_harness::{
    config::{ConfigFile, ExperimentConfig, Overrides},
    report::read_report,
    runner::{generate_synthetic, load_dataset, run_experiment},
    CheckpointRecord, DatasetSpec, HarnessError, KernelSpec,
};

fn base_config(dataset: &str, out: std::path::PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_sources(
        ConfigFile { dataset: Some(dataset.into()), ..Default::default() },
        Overrides::default(),
    )
    .unwrap();
    cfg.out = out;
    cfg
}

fn zero_timing(mut records: Vec<CheckpointRecord>) -> Vec<CheckpointRecord> {
    for r in &mut records {
        r.wall_time_s = 0.0;
    }
    records
}

#[test]
fn single_point_stream_yields_single_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = base_config("gaussian:n=1,seed=3", dir.path().join("r.jsonl"));
    let report = run_experiment(&cfg, false).unwrap();
    assert_eq!(report.records.len(), 1);
    let r = &report.records[0];
    assert_eq!((r.seed, r.t), (0, 1));
    // qbar = ceil(1 * 12 * ln(1/0.1)) = 28 copies at most.
    assert!(r.copies <= 28, "copies {} exceed the budget", r.copies);
    assert!(r.gamma_holds);
    assert!(r.risk_exact.is_some());
}

#[test]
fn identical_runs_are_identical_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = base_config("gaussian:n=48,seed=5", dir.path().join("a.jsonl"));
    let mut b = base_config("gaussian:n=48,seed=5", dir.path().join("b.jsonl"));
    a.seeds = vec![0, 1];
    b.seeds = vec![0, 1];
    let ra = run_experiment(&a, false).unwrap();
    let rb = run_experiment(&b, false).unwrap();
    assert_eq!(ra.records.len(), 6); // 2 seeds x {16, 32, 48}
    assert_eq!(zero_timing(ra.records), zero_timing(rb.records));
    // The CSV summaries agree line-for-line except the timing column.
    let csv_a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let csv_b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv_a.lines().count(), csv_b.lines().count());
}

#[test]
fn existing_output_requires_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = base_config("gaussian:n=16", dir.path().join("r.jsonl"));
    run_experiment(&cfg, false).unwrap();
    match run_experiment(&cfg, false) {
        Err(HarnessError::Config(msg)) => assert!(msg.contains("--resume"), "got: {msg}"),
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn resume_skips_completed_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut cfg = base_config("gaussian:n=32,seed=8", path.clone());
    cfg.seeds = vec![0, 1];
    cfg.checkpoints = Some(vec![8, 16]);
    let first = run_experiment(&cfg, false).unwrap();
    assert_eq!(first.new_records, 4);

    // Same file, one more seed: only the new 2 records are computed.
    cfg.seeds = vec![0, 1, 2];
    let second = run_experiment(&cfg, true).unwrap();
    assert_eq!(second.new_records, 2);
    assert_eq!(second.records.len(), 6);

    // The file holds exactly one record per (seed, checkpoint) pair.
    let (metas, records) = read_report(&path).unwrap();
    assert_eq!(metas.len(), 2);
    let mut pairs: Vec<(u64, usize)> = records.iter().map(|r| (r.seed, r.t)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    assert_eq!(pairs.len(), 6);

    // Resuming when everything is done adds nothing.
    let third = run_experiment(&cfg, true).unwrap();
    assert_eq!(third.new_records, 0);
    assert_eq!(third.records.len(), 6);
}

#[test]
fn streaming_dictionary_is_within_constant_factor_of_oracle() {
    // Same dataset, 20 seeds per sampler: the streaming sampler's final
    // copy total stays within a constant factor of the oracle's sample
    // size (medians; the factor is test slack).
    let dir = tempfile::tempdir().unwrap();
    let n = 160;
    let spec = format!("gaussian:n={n},seed=21");

    let collect = |sampler: &str, out: &str| -> Vec<u64> {
        let mut cfg = base_config(&spec, dir.path().join(out));
        cfg.sampler = squeak_harness::SamplerKind::parse(sampler).unwrap();
        cfg.seeds = (0..20).collect();
        cfg.checkpoints = Some(vec![n]);
        let report = run_experiment(&cfg, false).unwrap();
        let mut copies: Vec<u64> = report.records.iter().map(|r| r.copies).collect();
        copies.sort_unstable();
        copies
    };
    let streaming = collect("squeak", "squeak.jsonl");
    let oracle = collect("oracle-rls", "oracle.jsonl");
    let ratio = streaming[10] as f64 / oracle[10] as f64;
    assert!(ratio <= 8.0, "median copy ratio {ratio} exceeds 8");
}

#[test]
fn zero_noise_labels_equal_truth() {
    let spec = DatasetSpec::parse("gaussian:n=24,noise=0.0,seed=4").unwrap();
    let kernel = KernelSpec::Gaussian { bandwidth: 1.0 }.build().unwrap();
    let ds = generate_synthetic(&spec, &kernel).unwrap();
    let truth = ds.truth().unwrap();
    for (y, f) in ds.labels().iter().zip(truth.iter()) {
        assert_eq!(y, f);
    }
}

#[test]
fn generation_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::parse("blocks:n=30,blocks=5,scale=1.5,seed=11").unwrap();
    let kernel = KernelSpec::Linear.build().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    generate_synthetic(&spec, &kernel).unwrap().save_csv(&a).unwrap();
    generate_synthetic(&spec, &kernel).unwrap().save_csv(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn blocks_dataset_matches_closed_form_dimension() {
    let spec = DatasetSpec::parse("blocks:n=40,blocks=4,scale=2.0,seed=2").unwrap();
    let kernel = KernelSpec::Linear.build().unwrap();
    let ds = load_dataset(&spec, &kernel).unwrap();
    let gamma = 1.0;
    let k = squeak::kernels::full_matrix(&kernel, &ds, 40).unwrap();
    let oracle = effective_dimension(exact_rls(k.view(), gamma).unwrap().view());
    let closed = blocks_effective_dimension(40, 4, 2.0, gamma);
    assert!((oracle - closed).abs() <= 1e-8, "oracle {oracle} vs closed form {closed}");
}

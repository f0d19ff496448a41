//! Experiment execution: dataset loading, per-seed sampler runs, the
//! checkpoint verification pipeline, and report assembly.
//!
//! Seeds run on a small worker pool (each worker owns its random
//! generator; the shared dataset is read-only) and send finished
//! records through a channel to the single thread that owns the report
//! file. One invocation appends one meta line plus its new records,
//! sorted by (seed, checkpoint) so identical runs produce identical
//! files up to the timing fields.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use squeak::baselines::{d_max, oracle_rls_sample, uniform_sample};
use squeak::dataset::{gaussian_expansion, orthogonal_blocks, Dataset};
use squeak::kernels::{full_matrix, GramKernel, KernelFunction};
use squeak::nystrom::{
    build_sketch, fixed_design_risk, gamma_approx_check, ridge_smoother, NystromSketch,
};
use squeak::rls::{effective_dimension, exact_rls, RlsConfig};
use squeak::streaming::{run_stream_observed, SqueakConfig};

use crate::config::{DatasetSpec, ExperimentConfig, SamplerKind};
use crate::error::HarnessError;
use crate::report::{
    append_lines, completed_pairs, read_report, write_summary_csv, CheckpointRecord, ReportMeta,
    RunReport,
};

type Result<T> = std::result::Result<T, HarnessError>;

/// Materializes a dataset from its spec: loads the CSV or runs the
/// named generator. The kernel parameterizes the smooth-target
/// generator's expansion.
pub fn load_dataset(spec: &DatasetSpec, kernel: &KernelFunction) -> Result<Dataset> {
    match spec {
        DatasetSpec::Csv { path } => Dataset::load_csv(path).map_err(|e| {
            HarnessError::Config(format!("failed to load dataset {}: {e}", path.display()))
        }),
        DatasetSpec::Gaussian { n, dim, centers, noise, seed } => {
            Ok(gaussian_expansion(*n, *dim, *centers, kernel, *noise, *seed)?)
        }
        DatasetSpec::Blocks { n, blocks, scale, noise, seed } => {
            Ok(orthogonal_blocks(*n, *blocks, *scale, *noise, *seed)?)
        }
    }
}

/// Like [`load_dataset`], but only for the synthetic generators — the
/// entry point of the `generate` subcommand.
pub fn generate_synthetic(spec: &DatasetSpec, kernel: &KernelFunction) -> Result<Dataset> {
    if matches!(spec, DatasetSpec::Csv { .. }) {
        return Err(HarnessError::Config(
            "generate needs a synthetic spec (gaussian:n=.. or blocks:n=..), not csv:".into(),
        ));
    }
    load_dataset(spec, kernel)
}

/// Runs the configured experiment: every seed, every checkpoint not yet
/// present in the output file, full verification at each.
///
/// Without `resume`, an existing output file is a configuration error
/// (reports are append-only); with `resume`, completed (seed,
/// checkpoint) pairs are skipped and new records appended.
pub fn run_experiment(config: &ExperimentConfig, resume: bool) -> Result<RunReport> {
    let kernel = config.kernel.build()?;
    let dataset = load_dataset(&config.dataset, &kernel)?;
    if dataset.is_empty() {
        return Err(HarnessError::Config("dataset contains no points".into()));
    }
    let checkpoints = config.resolved_checkpoints(dataset.len())?;

    let (prev_metas, prev_records) = if config.out.exists() {
        if !resume {
            return Err(HarnessError::Config(format!(
                "output {} already exists; pass --resume to continue it or choose another path",
                config.out.display()
            )));
        }
        read_report(&config.out)?
    } else {
        read_report(&config.out)? // canonical empty-report path
    };
    if let Some(last) = prev_metas.last() {
        if last.config != *config {
            log::warn!(
                "resuming {} with a configuration that differs from its last invocation",
                config.out.display()
            );
        }
    }
    let done = completed_pairs(&prev_records);

    let results = run_seeds(config, &dataset, &kernel, &checkpoints, &done);
    let mut new_records = Vec::new();
    for (seed, result) in results {
        let records =
            result.map_err(|e| HarnessError::Report(format!("seed {seed} failed: {e}")))?;
        new_records.extend(records);
    }
    new_records.sort_by_key(|r| (r.seed, r.t));
    let new_failures = new_records.iter().filter(|r| !r.gamma_holds).count();

    let meta =
        ReportMeta { version: env!("CARGO_PKG_VERSION").to_string(), config: config.clone() };
    append_lines(&config.out, &meta, &new_records)?;

    let mut records = prev_records;
    let new_count = new_records.len();
    records.extend(new_records);
    records.sort_by_key(|r| (r.seed, r.t));
    write_summary_csv(&config.out, &records)?;

    Ok(RunReport { meta, records, new_records: new_count, new_failures })
}

/// Fans seeds out over a worker pool and collects per-seed results
/// through a channel. Results come back unordered; the caller sorts.
fn run_seeds(
    config: &ExperimentConfig,
    dataset: &Dataset,
    kernel: &KernelFunction,
    checkpoints: &[usize],
    done: &BTreeSet<(u64, usize)>,
) -> Vec<(u64, Result<Vec<CheckpointRecord>>)> {
    let seeds = &config.seeds;
    let workers = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1);
    let workers = workers.min(seeds.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= seeds.len() {
                    break;
                }
                let seed = seeds[i];
                let result = run_seed(config, dataset, kernel, checkpoints, done, seed);
                if tx.send((seed, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        rx.iter().collect()
    })
}

fn run_seed(
    config: &ExperimentConfig,
    dataset: &Dataset,
    kernel: &KernelFunction,
    checkpoints: &[usize],
    done: &BTreeSet<(u64, usize)>,
    seed: u64,
) -> Result<Vec<CheckpointRecord>> {
    let todo: Vec<usize> =
        checkpoints.iter().copied().filter(|&t| !done.contains(&(seed, t))).collect();
    if todo.is_empty() {
        return Ok(Vec::new());
    }
    match config.sampler {
        SamplerKind::Squeak => run_seed_streaming(config, dataset, kernel, &todo, seed),
        SamplerKind::Uniform | SamplerKind::OracleRls => {
            run_seed_baseline(config, dataset, kernel, &todo, seed)
        }
    }
}

/// One streaming run, verified at each requested checkpoint.
fn run_seed_streaming(
    config: &ExperimentConfig,
    dataset: &Dataset,
    kernel: &KernelFunction,
    todo: &[usize],
    seed: u64,
) -> Result<Vec<CheckpointRecord>> {
    let rls = RlsConfig::new(config.gamma, config.epsilon)?;
    let stream_config = SqueakConfig::new(rls, config.delta, config.qbar_const, dataset.len(), seed)?;

    let mut peak = 0u64;
    let mut timing: Vec<(usize, f64, u64)> = Vec::with_capacity(todo.len());
    let states = run_stream_observed(
        dataset,
        kernel,
        &stream_config,
        |t| todo.binary_search(&t).is_ok(),
        |p| {
            peak = peak.max(p.kernel_evals);
            if todo.binary_search(&p.step).is_ok() {
                timing.push((p.step, p.elapsed.as_secs_f64(), peak));
            }
        },
    )?;

    let mut records = Vec::with_capacity(states.len());
    for (state, (t, wall, peak_at)) in states.iter().zip(timing) {
        debug_assert_eq!(state.step(), t);
        let k_t = full_matrix(kernel, dataset, t)?;
        let access = GramKernel(k_t.view());
        let sketch = build_sketch(state.dictionary(), &access, config.gamma)?;
        records.push(verify_checkpoint(
            config,
            dataset,
            &k_t,
            &sketch,
            seed,
            t,
            state.copies_total(),
            wall,
            peak_at,
        )?);
    }
    Ok(records)
}

/// Baseline samplers draw a fresh dictionary at each checkpoint; the
/// sample size follows the standard prescriptions — effective dimension
/// for score sampling, maximal degree of freedom for uniform — with the
/// configured leading constant.
fn run_seed_baseline(
    config: &ExperimentConfig,
    dataset: &Dataset,
    kernel: &KernelFunction,
    todo: &[usize],
    seed: u64,
) -> Result<Vec<CheckpointRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(todo.len());
    for &t in todo {
        // Independent draws per checkpoint, reproducible per (seed, t).
        rng.set_stream(t as u64);
        let k_t = full_matrix(kernel, dataset, t)?;
        let tau = exact_rls(k_t.view(), config.gamma)?;
        let dimension = match config.sampler {
            SamplerKind::Uniform => d_max(tau.view(), t),
            _ => effective_dimension(tau.view()),
        };
        let eps2 = config.epsilon * config.epsilon;
        let m = (config.qbar_const / eps2 * dimension * (t as f64 / config.delta).ln())
            .ceil()
            .max(1.0) as u64;

        let start = Instant::now();
        let dict = match config.sampler {
            SamplerKind::Uniform => uniform_sample(t, m, &mut rng)?,
            _ => oracle_rls_sample(k_t.view(), config.gamma, m, &mut rng)?,
        };
        let wall = start.elapsed().as_secs_f64();
        // Oracle sampling needs the whole kernel matrix for its scores;
        // uniform sampling touches no kernel entries to pick indices.
        let peak = match config.sampler {
            SamplerKind::Uniform => 0,
            _ => (t * (t + 1) / 2) as u64,
        };

        let access = GramKernel(k_t.view());
        let sketch = build_sketch(&dict, &access, config.gamma)?;
        records.push(verify_checkpoint(
            config,
            dataset,
            &k_t,
            &sketch,
            seed,
            t,
            dict.total_copies(),
            wall,
            peak,
        )?);
    }
    Ok(records)
}

/// Full verification at one checkpoint: oracle effective dimension, the
/// two-sided approximation check, and the closed-form fixed-design
/// risks (when the dataset records its truth and noise level).
#[allow(clippy::too_many_arguments)]
fn verify_checkpoint<K: squeak::kernels::KernelAccess + ?Sized>(
    config: &ExperimentConfig,
    dataset: &Dataset,
    k_t: &Array2<f64>,
    sketch: &NystromSketch<'_, K>,
    seed: u64,
    t: usize,
    copies: u64,
    wall_time_s: f64,
    peak_kernel_evals: u64,
) -> Result<CheckpointRecord> {
    let tau = exact_rls(k_t.view(), config.gamma)?;
    let d_eff_oracle = effective_dimension(tau.view());
    let k_tilde = sketch.materialize()?;
    let check = gamma_approx_check(k_t.view(), k_tilde.view(), config.gamma, config.epsilon)?;

    let risks = match (dataset.truth(), dataset.noise_stddev()) {
        (Some(truth), Some(sigma)) => {
            let f_star = truth.slice(s![..t]);
            let exact = fixed_design_risk(ridge_smoother(k_t.view(), config.mu)?.view(), f_star, sigma)?;
            let sketch_pred =
                fixed_design_risk(sketch.hat_matrix(config.mu)?.view(), f_star, sigma)?;
            let exact_pred = fixed_design_risk(
                sketch.hat_matrix_exact_prediction(k_t.view(), config.mu)?.view(),
                f_star,
                sigma,
            )?;
            (Some(exact), Some(sketch_pred), Some(exact_pred))
        }
        _ => (None, None, None),
    };

    Ok(CheckpointRecord {
        seed,
        t,
        sampler: config.sampler.name().to_string(),
        copies,
        d_eff_oracle,
        gamma_holds: check.holds,
        gamma_margin: check.margin,
        risk_exact: risks.0,
        risk_nystrom_sketch: risks.1,
        risk_nystrom_exact: risks.2,
        wall_time_s,
        peak_kernel_evals,
    })
}

//! Seeded experiment harness for the streaming kernel-sketching
//! library: dataset ingestion and generation, sampler execution, and
//! machine-readable verification reports.
//!
//! The harness runs one of three samplers — the one-pass streaming
//! sampler, uniform column sampling, or oracle sampling from exact
//! ridge leverage scores — over a dataset, then stops at configured
//! checkpoints to materialize the kernel matrix (up to a verification
//! cap), run the two-sided approximation check, and compute oracle
//! effective dimensions and closed-form fixed-design risks.
//!
//! Outputs are append-only JSON lines (one record per seed and
//! checkpoint, plus one meta line per invocation) and a flat CSV
//! summary for downstream plotting; no plots are produced here. Re-runs
//! with `--resume` skip completed (seed, checkpoint) pairs.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::{ConfigFile, DatasetSpec, ExperimentConfig, KernelSpec, Overrides, SamplerKind};
pub use error::{HarnessError, EXIT_CONFIG, EXIT_VERIFY};
pub use report::{CheckpointRecord, ReportLine, ReportMeta, RunReport};
pub use runner::{generate_synthetic, load_dataset, run_experiment};

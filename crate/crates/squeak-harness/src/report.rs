//! Report records and their on-disk formats: append-only JSON lines for
//! the full data, plus a flat CSV summary for plotting.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

type Result<T> = std::result::Result<T, HarnessError>;

/// Invocation header: code version and the full configuration echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub version: String,
    pub config: ExperimentConfig,
}

/// One verification record, produced per (seed, checkpoint).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub seed: u64,
    /// Stream position the checkpoint verified.
    pub t: usize,
    pub sampler: String,
    /// Total retained copies |I_t| (for baselines: the drawn sample
    /// size m).
    pub copies: u64,
    /// Effective dimension from the exact leverage scores of K_t.
    pub d_eff_oracle: f64,
    /// Whether the two-sided approximation check held, and its margin
    /// (the binding eigenvalue; negative when the check fails). The
    /// margin is absent when a large checkpoint passed by Cholesky
    /// certificate alone, without computing eigenvalues.
    pub gamma_holds: bool,
    pub gamma_margin: Option<f64>,
    /// Fixed-design risks; absent when the dataset has no recorded
    /// truth/noise level. `risk_nystrom_sketch` predicts through the
    /// approximate matrix, `risk_nystrom_exact` through exact kernel
    /// rows.
    pub risk_exact: Option<f64>,
    pub risk_nystrom_sketch: Option<f64>,
    pub risk_nystrom_exact: Option<f64>,
    /// Seconds spent producing the dictionary up to t (streaming time
    /// for the one-pass sampler; sampling time for baselines).
    /// Verification cost is excluded.
    pub wall_time_s: f64,
    /// Sampler kernel-evaluation footprint: for the streaming sampler
    /// the largest per-step count up to t; for oracle sampling the full
    /// t(t+1)/2 it needs to compute exact scores; zero for uniform.
    pub peak_kernel_evals: u64,
}

/// One JSON line of a report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportLine {
    Meta(ReportMeta),
    Checkpoint(CheckpointRecord),
}

/// In-memory result of a run: the invocation header, every record now
/// present in the report file (sorted by seed, then checkpoint), and
/// what this invocation contributed.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub meta: ReportMeta,
    pub records: Vec<CheckpointRecord>,
    /// Records appended by this invocation (the rest were already in
    /// the file and skipped under --resume).
    pub new_records: usize,
    /// How many of the new records failed the approximation check.
    pub new_failures: usize,
}

/// Parses an existing report file into headers and records. Missing
/// file → empty report.
pub fn read_report(path: &Path) -> Result<(Vec<ReportMeta>, Vec<CheckpointRecord>)> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), Vec::new())),
        Err(e) => return Err(e.into()),
    };
    let mut metas = Vec::new();
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ReportLine = serde_json::from_str(&line).map_err(|e| {
            HarnessError::Report(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        match parsed {
            ReportLine::Meta(m) => metas.push(m),
            ReportLine::Checkpoint(r) => records.push(r),
        }
    }
    Ok((metas, records))
}

/// The (seed, checkpoint) pairs already present in a report.
pub fn completed_pairs(records: &[CheckpointRecord]) -> BTreeSet<(u64, usize)> {
    records.iter().map(|r| (r.seed, r.t)).collect()
}

/// Appends one meta line and the given records to the JSON-lines file.
pub fn append_lines(path: &Path, meta: &ReportMeta, records: &[CheckpointRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut write_line = |line: &ReportLine| -> Result<()> {
        let text = serde_json::to_string(line)
            .map_err(|e| HarnessError::Report(format!("serializing report line: {e}")))?;
        writeln!(file, "{text}")?;
        Ok(())
    };
    write_line(&ReportLine::Meta(meta.clone()))?;
    for r in records {
        write_line(&ReportLine::Checkpoint(r.clone()))?;
    }
    Ok(())
}

/// Rewrites the flat CSV summary next to the JSON-lines file (same stem,
/// `.csv` extension) from the full record set.
pub fn write_summary_csv(jsonl_path: &Path, records: &[CheckpointRecord]) -> Result<()> {
    let path = jsonl_path.with_extension("csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "seed",
        "t",
        "sampler",
        "copies",
        "d_eff_oracle",
        "gamma_holds",
        "gamma_margin",
        "risk_exact",
        "risk_nystrom_sketch",
        "risk_nystrom_exact",
        "wall_time_s",
        "peak_kernel_evals",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.seed.to_string(),
            r.t.to_string(),
            r.sampler.clone(),
            r.copies.to_string(),
            r.d_eff_oracle.to_string(),
            r.gamma_holds.to_string(),
            opt(r.gamma_margin),
            opt(r.risk_exact),
            opt(r.risk_nystrom_sketch),
            opt(r.risk_nystrom_exact),
            r.wall_time_s.to_string(),
            r.peak_kernel_evals.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFile, Overrides};

    fn sample_record(seed: u64, t: usize) -> CheckpointRecord {
        CheckpointRecord {
            seed,
            t,
            sampler: "squeak".into(),
            copies: 42,
            d_eff_oracle: 3.5,
            gamma_holds: true,
            gamma_margin: Some(0.01),
            risk_exact: Some(0.2),
            risk_nystrom_sketch: Some(0.21),
            risk_nystrom_exact: None,
            wall_time_s: 0.5,
            peak_kernel_evals: 10,
        }
    }

    fn sample_meta() -> ReportMeta {
        let config = ExperimentConfig::from_sources(
            ConfigFile { dataset: Some("gaussian:n=32".into()), ..Default::default() },
            Overrides::default(),
        )
        .unwrap();
        ReportMeta { version: "test".into(), config }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        let meta = sample_meta();
        let records = vec![sample_record(0, 16), sample_record(0, 32)];
        append_lines(&path, &meta, &records).unwrap();
        append_lines(&path, &meta, &[sample_record(1, 16)]).unwrap();

        let (metas, parsed) = read_report(&path).unwrap();
        assert_eq!(metas.len(), 2);
        assert_eq!(metas[0], meta);
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0], records[0]);
        assert_eq!(
            completed_pairs(&parsed),
            [(0, 16), (0, 32), (1, 16)].into_iter().collect()
        );
    }

    #[test]
    fn missing_report_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (metas, records) = read_report(&dir.path().join("absent.jsonl")).unwrap();
        assert!(metas.is_empty());
        assert!(records.is_empty());
    }

    #[test]
    fn corrupt_line_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        std::fs::write(&path, "{\"kind\":\"bogus\"}\n").unwrap();
        let err = read_report(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "unexpected error: {err}");
    }

    #[test]
    fn csv_summary_has_one_row_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        let records = vec![sample_record(0, 16), sample_record(7, 64)];
        write_summary_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("seed,t,sampler"));
        assert!(lines[1].starts_with("0,16,squeak,42"));
        // Absent risks serialize as empty cells.
        assert!(lines[2].contains(",,"));
    }
}

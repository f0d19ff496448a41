//! Experiment configuration: dataset/kernel/sampler specifications,
//! parameter validation, and the flag-over-file layering rules.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use squeak::kernels::KernelFunction;

use crate::error::HarnessError;

type Result<T> = std::result::Result<T, HarnessError>;

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Where the data comes from: a CSV file or one of the two synthetic
/// generators.
///
/// Spec strings: `csv:PATH`,
/// `gaussian:n=256[,dim=3][,centers=8][,noise=0.1][,seed=0]`, or
/// `blocks:n=256[,blocks=8][,scale=2.0][,noise=0.1][,seed=0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Load a CSV file in the library's dataset format.
    Csv { path: PathBuf },
    /// I.i.d. Gaussian points with a random smooth target function
    /// (a low-norm expansion in the experiment's kernel).
    Gaussian { n: usize, dim: usize, centers: usize, noise: f64, seed: u64 },
    /// Scaled orthogonal blocks with closed-form effective dimension
    /// under the linear kernel.
    Blocks { n: usize, blocks: usize, scale: f64, noise: f64, seed: u64 },
}

fn parse_kv_fields(body: &str, spec: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .filter(|part| !part.is_empty())
        .map(|part| {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| config_err(format!("expected key=value in `{spec}`, got `{part}`")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str, spec: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("invalid value `{value}` for `{key}` in `{spec}`")))
}

impl DatasetSpec {
    /// Parses a dataset spec string.
    pub fn parse(spec: &str) -> Result<Self> {
        let (head, body) = spec.split_once(':').unwrap_or((spec, ""));
        match head {
            "csv" => {
                if body.is_empty() {
                    return Err(config_err("csv dataset spec needs a path: csv:PATH"));
                }
                Ok(Self::Csv { path: PathBuf::from(body) })
            }
            "gaussian" | "blocks" => {
                let mut n = None;
                let mut dim = 3usize;
                let mut centers = 8usize;
                let mut blocks = 8usize;
                let mut scale = 2.0f64;
                let mut noise = 0.1f64;
                let mut seed = 0u64;
                for (k, v) in parse_kv_fields(body, spec)? {
                    match k.as_str() {
                        "n" => n = Some(parse_field(&k, &v, spec)?),
                        "dim" if head == "gaussian" => dim = parse_field(&k, &v, spec)?,
                        "centers" if head == "gaussian" => centers = parse_field(&k, &v, spec)?,
                        "blocks" if head == "blocks" => blocks = parse_field(&k, &v, spec)?,
                        "scale" if head == "blocks" => scale = parse_field(&k, &v, spec)?,
                        "noise" => noise = parse_field(&k, &v, spec)?,
                        "seed" => seed = parse_field(&k, &v, spec)?,
                        _ => {
                            return Err(config_err(format!("unknown key `{k}` in `{spec}`")));
                        }
                    }
                }
                let n = n.ok_or_else(|| config_err(format!("`{spec}` needs n=<points>")))?;
                if head == "gaussian" {
                    Ok(Self::Gaussian { n, dim, centers, noise, seed })
                } else {
                    Ok(Self::Blocks { n, blocks, scale, noise, seed })
                }
            }
            _ => Err(config_err(format!(
                "unknown dataset spec `{spec}`; expected csv:PATH, gaussian:n=.., or blocks:n=.."
            ))),
        }
    }
}

/// Kernel choice. Spec strings: `gaussian:BANDWIDTH`, `linear`, or
/// `polynomial:DEGREE,OFFSET`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
    Linear,
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    /// Parses a kernel spec string.
    pub fn parse(spec: &str) -> Result<Self> {
        let (head, body) = spec.split_once(':').unwrap_or((spec, ""));
        match head {
            "gaussian" => {
                let bandwidth = parse_field("bandwidth", body, spec)?;
                Ok(Self::Gaussian { bandwidth })
            }
            "linear" => Ok(Self::Linear),
            "polynomial" => {
                let (d, o) = body.split_once(',').ok_or_else(|| {
                    config_err(format!("polynomial kernel needs DEGREE,OFFSET, got `{spec}`"))
                })?;
                Ok(Self::Polynomial {
                    degree: parse_field("degree", d, spec)?,
                    offset: parse_field("offset", o, spec)?,
                })
            }
            _ => Err(config_err(format!(
                "unknown kernel spec `{spec}`; expected gaussian:BW, linear, or polynomial:DEG,OFF"
            ))),
        }
    }

    /// Instantiates the kernel, validating its parameters.
    pub fn build(&self) -> Result<KernelFunction> {
        let k = match *self {
            Self::Gaussian { bandwidth } => KernelFunction::gaussian(bandwidth)?,
            Self::Linear => KernelFunction::Linear,
            Self::Polynomial { degree, offset } => KernelFunction::polynomial(degree, offset)?,
        };
        Ok(k)
    }
}

/// Which sampler produces the dictionary under measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    /// The streaming sampler (one pass, estimated leverage scores).
    Squeak,
    /// Uniform i.i.d. column sampling, sized by the maximal degree of
    /// freedom.
    Uniform,
    /// I.i.d. sampling from exact ridge leverage scores, sized by the
    /// effective dimension.
    OracleRls,
}

impl SamplerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "squeak" => Ok(Self::Squeak),
            "uniform" => Ok(Self::Uniform),
            "oracle-rls" => Ok(Self::OracleRls),
            _ => Err(config_err(format!(
                "unknown sampler `{s}`; expected squeak, uniform, or oracle-rls"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Squeak => "squeak",
            Self::Uniform => "uniform",
            Self::OracleRls => "oracle-rls",
        }
    }
}

/// A fully resolved, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub kernel: KernelSpec,
    pub gamma: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub qbar_const: f64,
    pub sampler: SamplerKind,
    pub seeds: Vec<u64>,
    /// Explicit verification checkpoints; `None` selects the default
    /// geometric grid {16, 32, ..} capped with the stream length.
    pub checkpoints: Option<Vec<usize>>,
    pub out: PathBuf,
    /// Largest t at which an O(t^2) kernel matrix may be materialized
    /// for verification.
    pub verify_cap: usize,
}

/// The optional config file: same keys as the CLI flags, all optional;
/// flags override file values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<String>,
    pub kernel: Option<String>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub qbar_const: Option<f64>,
    pub sampler: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub checkpoints: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub verify_cap: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            config_err(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| config_err(format!("cannot parse config file {}: {e}", path.display())))
    }
}

/// CLI-style overrides, already parsed into their target types where
/// unambiguous and kept as strings where the shared spec grammar
/// applies.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset: Option<String>,
    pub kernel: Option<String>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub qbar_const: Option<f64>,
    pub sampler: Option<String>,
    pub seeds: Option<String>,
    pub checkpoints: Option<String>,
    pub out: Option<PathBuf>,
    pub verify_cap: Option<usize>,
}

/// Parses a seed list: either comma-separated values (`0,3,17`) or a
/// half-open range (`0..50`).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let start: u64 = parse_field("seeds", a, s)?;
        let end: u64 = parse_field("seeds", b, s)?;
        if end <= start {
            return Err(config_err(format!("empty seed range `{s}`")));
        }
        Ok((start..end).collect())
    } else {
        s.split(',').map(|part| parse_field("seeds", part.trim(), s)).collect()
    }
}

fn parse_checkpoints(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|part| parse_field("checkpoints", part.trim(), s)).collect()
}

impl ExperimentConfig {
    /// Layers CLI overrides on top of an optional config file and fills
    /// the documented defaults, then validates.
    pub fn from_sources(file: ConfigFile, over: Overrides) -> Result<Self> {
        let dataset_str = over
            .dataset
            .or(file.dataset)
            .ok_or_else(|| config_err("no dataset given (flag --dataset or config key)"))?;
        let kernel_str = over.kernel.or(file.kernel).unwrap_or_else(|| "gaussian:1.0".into());
        let sampler_str = over.sampler.or(file.sampler).unwrap_or_else(|| "squeak".into());
        let seeds = match over.seeds {
            Some(s) => parse_seeds(&s)?,
            None => file.seeds.unwrap_or_else(|| vec![0]),
        };
        let checkpoints = match over.checkpoints {
            Some(s) => Some(parse_checkpoints(&s)?),
            None => file.checkpoints,
        };
        let gamma = over.gamma.or(file.gamma).unwrap_or(1.0);
        let config = Self {
            dataset: DatasetSpec::parse(&dataset_str)?,
            kernel: KernelSpec::parse(&kernel_str)?,
            gamma,
            mu: over.mu.or(file.mu).unwrap_or(gamma),
            epsilon: over.epsilon.or(file.epsilon).unwrap_or(0.5),
            delta: over.delta.or(file.delta).unwrap_or(0.1),
            qbar_const: over.qbar_const.or(file.qbar_const).unwrap_or(1.0),
            sampler: SamplerKind::parse(&sampler_str)?,
            seeds,
            checkpoints,
            out: over.out.or(file.out).unwrap_or_else(|| PathBuf::from("report.jsonl")),
            verify_cap: over.verify_cap.or(file.verify_cap).unwrap_or(2000),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every numeric range the experiment relies on.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(config_err(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.mu > 0.0) {
            return Err(config_err(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(config_err(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.qbar_const > 0.0) {
            return Err(config_err(format!(
                "qbar-const must be positive, got {}",
                self.qbar_const
            )));
        }
        if self.seeds.is_empty() {
            return Err(config_err("at least one seed is required"));
        }
        if self.verify_cap == 0 {
            return Err(config_err("verify-cap must be at least 1"));
        }
        Ok(())
    }

    /// The verification checkpoints for a stream of length `n`: the
    /// configured list (sorted, deduplicated) or the geometric default
    /// {16, 32, ..} ∪ {n}. Every checkpoint must respect both the
    /// stream length and the verification cap.
    pub fn resolved_checkpoints(&self, n: usize) -> Result<Vec<usize>> {
        let mut points = match &self.checkpoints {
            Some(list) => {
                let mut v = list.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => {
                let mut v = Vec::new();
                let mut t = 16;
                while t < n {
                    v.push(t);
                    t *= 2;
                }
                v.push(n);
                v
            }
        };
        points.retain(|&t| t > 0);
        if points.is_empty() {
            return Err(config_err("checkpoint list is empty"));
        }
        if let Some(&last) = points.last() {
            if last > n {
                return Err(config_err(format!(
                    "checkpoint {last} lies beyond the stream length {n}"
                )));
            }
            if last > self.verify_cap {
                return Err(config_err(format!(
                    "checkpoint {last} exceeds the verification cap {}; raise --verify-cap to \
                     allow materializing a {last}x{last} kernel matrix",
                    self.verify_cap
                )));
            }
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_spec_grammar() {
        assert_eq!(
            DatasetSpec::parse("csv:data/foo.csv").unwrap(),
            DatasetSpec::Csv { path: PathBuf::from("data/foo.csv") }
        );
        assert_eq!(
            DatasetSpec::parse("gaussian:n=256,dim=2,centers=4,noise=0.2,seed=9").unwrap(),
            DatasetSpec::Gaussian { n: 256, dim: 2, centers: 4, noise: 0.2, seed: 9 }
        );
        assert_eq!(
            DatasetSpec::parse("gaussian:n=64").unwrap(),
            DatasetSpec::Gaussian { n: 64, dim: 3, centers: 8, noise: 0.1, seed: 0 }
        );
        assert_eq!(
            DatasetSpec::parse("blocks:n=100,blocks=5,scale=1.5").unwrap(),
            DatasetSpec::Blocks { n: 100, blocks: 5, scale: 1.5, noise: 0.1, seed: 0 }
        );
        assert!(DatasetSpec::parse("gaussian:dim=2").is_err());
        assert!(DatasetSpec::parse("gaussian:n=64,scale=2").is_err());
        assert!(DatasetSpec::parse("parquet:foo").is_err());
        assert!(DatasetSpec::parse("csv:").is_err());
    }

    #[test]
    fn kernel_spec_grammar() {
        assert_eq!(
            KernelSpec::parse("gaussian:0.7").unwrap(),
            KernelSpec::Gaussian { bandwidth: 0.7 }
        );
        assert_eq!(KernelSpec::parse("linear").unwrap(), KernelSpec::Linear);
        assert_eq!(
            KernelSpec::parse("polynomial:2,1.0").unwrap(),
            KernelSpec::Polynomial { degree: 2, offset: 1.0 }
        );
        assert!(KernelSpec::parse("gaussian:").is_err());
        assert!(KernelSpec::parse("polynomial:2").is_err());
        assert!(KernelSpec::parse("rbf:1").is_err());
        // Parameter validity surfaces when the kernel is built.
        assert!(KernelSpec::Gaussian { bandwidth: 0.0 }.build().is_err());
    }

    #[test]
    fn seed_grammar() {
        assert_eq!(parse_seeds("0,3,17").unwrap(), vec![0, 3, 17]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("a,b").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = ConfigFile {
            dataset: Some("gaussian:n=64".into()),
            gamma: Some(2.0),
            seeds: Some(vec![1, 2]),
            ..Default::default()
        };
        let over = Overrides { gamma: Some(5.0), ..Default::default() };
        let cfg = ExperimentConfig::from_sources(file, over).unwrap();
        assert_eq!(cfg.gamma, 5.0);
        // mu defaults to gamma (the overridden value).
        assert_eq!(cfg.mu, 5.0);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.epsilon, 0.5);
        assert_eq!(cfg.verify_cap, 2000);
    }

    #[test]
    fn validation_ranges() {
        let base = || {
            ExperimentConfig::from_sources(
                ConfigFile { dataset: Some("gaussian:n=16".into()), ..Default::default() },
                Overrides::default(),
            )
            .unwrap()
        };
        let mut c = base();
        c.epsilon = 1.0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.delta = 0.0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.gamma = -1.0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.seeds.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn checkpoint_resolution() {
        let cfg = ExperimentConfig::from_sources(
            ConfigFile { dataset: Some("gaussian:n=100".into()), ..Default::default() },
            Overrides::default(),
        )
        .unwrap();
        assert_eq!(cfg.resolved_checkpoints(100).unwrap(), vec![16, 32, 64, 100]);
        assert_eq!(cfg.resolved_checkpoints(16).unwrap(), vec![16]);
        assert_eq!(cfg.resolved_checkpoints(5).unwrap(), vec![5]);

        let mut listed = cfg.clone();
        listed.checkpoints = Some(vec![32, 8, 32]);
        assert_eq!(listed.resolved_checkpoints(100).unwrap(), vec![8, 32]);
        listed.checkpoints = Some(vec![128]);
        assert!(listed.resolved_checkpoints(100).is_err());

        let mut capped = cfg;
        capped.verify_cap = 50;
        assert!(capped.resolved_checkpoints(100).is_err());
    }
}

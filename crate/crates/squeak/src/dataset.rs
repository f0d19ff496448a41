//! Sample streams: points, labels, optional ground truth, and synthetic
//! generators with known effective dimension.
//!
//! A [`Dataset`] is the ordered stream `x_1, x_2, ...` driving the
//! incremental algorithms, together with regression labels
//! `y_t = f*(x_t) + eta_t`. For synthetic data the truth vector `f*` and
//! the noise level `sigma` are carried along so fixed-design risk can be
//! computed exactly rather than estimated.
//!
//! Two generators cover the behaviors the test suite needs:
//! [`gaussian_expansion`] (i.i.d. Gaussian points, smooth random target of
//! unit RKHS norm) and [`orthogonal_blocks`] (repeated orthogonal points
//! whose effective dimension has a closed form, see
//! [`blocks_effective_dimension`]).

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::KernelFunction;

/// An ordered regression sample stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
    labels: Array1<f64>,
    truth: Option<Array1<f64>>,
    noise_stddev: Option<f64>,
}

impl Dataset {
    /// Bundles points (one row per sample) with labels and optional truth.
    ///
    /// Lengths must agree; `noise_stddev`, when present, must be a finite
    /// nonnegative real.
    pub fn new(
        points: Array2<f64>,
        labels: Array1<f64>,
        truth: Option<Array1<f64>>,
        noise_stddev: Option<f64>,
    ) -> Result<Self> {
        if points.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "points must have at least one coordinate".into(),
            ));
        }
        if points.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(points.nrows(), labels.len()));
        }
        if let Some(t) = &truth {
            if t.len() != points.nrows() {
                return Err(Error::DimensionMismatch(points.nrows(), t.len()));
            }
        }
        if let Some(s) = noise_stddev {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "noise stddev must be a finite nonnegative real, got {s}"
                )));
            }
        }
        Ok(Self { points, labels, truth, noise_stddev })
    }

    /// Number of samples in the stream.
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// The `t`-th point (zero-based stream position).
    pub fn point(&self, t: usize) -> ArrayView1<'_, f64> {
        self.points.row(t)
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn labels(&self) -> ArrayView1<'_, f64> {
        self.labels.view()
    }

    /// Ground-truth function values `f*(x_t)`, when known.
    pub fn truth(&self) -> Option<ArrayView1<'_, f64>> {
        self.truth.as_ref().map(|t| t.view())
    }

    /// Label noise standard deviation `sigma`, when known.
    pub fn noise_stddev(&self) -> Option<f64> {
        self.noise_stddev
    }

    /// Writes the stream as CSV: header `x_1,..,x_d,y[,f_star]`, one row
    /// per sample. The truth column is present exactly when truth is known.
    /// Values use Rust's shortest round-trip float formatting, so
    /// write-then-read reproduces the dataset bit for bit.
    pub fn write_csv<W: IoWrite>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.dim();
        let mut header: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
        header.push("y".into());
        if self.truth.is_some() {
            header.push("f_star".into());
        }
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut row: Vec<String> = self.points.row(t).iter().map(|v| v.to_string()).collect();
            row.push(self.labels[t].to_string());
            if let Some(truth) = &self.truth {
                row.push(truth[t].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a stream from CSV in the [`write_csv`](Self::write_csv)
    /// format. The header row is required; the `f_star` column is optional.
    pub fn read_csv<R: IoRead>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        let d = names.iter().take_while(|n| n.starts_with("x_")).count();
        let expected: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
        let mut ok =
            d >= 1 && names.iter().take(d).copied().eq(expected.iter().map(|s| s.as_str()));
        let has_truth = match names.len().checked_sub(d) {
            Some(1) => {
                ok &= names[d] == "y";
                false
            }
            Some(2) => {
                ok &= names[d] == "y" && names[d + 1] == "f_star";
                true
            }
            _ => {
                ok = false;
                false
            }
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "CSV header must be x_1,..,x_d,y[,f_star]; got `{}`",
                names.join(",")
            )));
        }

        let parse = |field: &str, line: u64| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| {
                Error::InvalidParameter(format!("line {line}: `{field}` is not a real number"))
            })
        };
        let mut flat = Vec::new();
        let mut labels = Vec::new();
        let mut truth = Vec::new();
        for record in r.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != names.len() {
                return Err(Error::InvalidParameter(format!(
                    "line {line}: expected {} fields, got {}",
                    names.len(),
                    record.len()
                )));
            }
            for field in record.iter().take(d) {
                flat.push(parse(field, line)?);
            }
            labels.push(parse(&record[d], line)?);
            if has_truth {
                truth.push(parse(&record[d + 1], line)?);
            }
        }
        let n = labels.len();
        let points = Array2::from_shape_vec((n, d), flat).expect("row-major by construction");
        Self::new(
            points,
            Array1::from_vec(labels),
            has_truth.then(|| Array1::from_vec(truth)),
            None,
        )
    }

    /// [`write_csv`](Self::write_csv) to a file path.
    pub fn save_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// [`read_csv`](Self::read_csv) from a file path.
    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// I.i.d. standard Gaussian points in `R^dim` with a smooth random target.
///
/// The target is a kernel expansion `f* = sum_j c_j K(z_j, .)` over
/// `centers` auxiliary Gaussian points, with coefficients rescaled so that
/// `||f*||` in the kernel's RKHS is exactly one. Labels are
/// `y_t = f*(x_t) + eta_t` with `eta_t ~ N(0, noise_stddev^2)`.
///
/// Draw order (fixed for reproducibility): points row by row, then centers,
/// then coefficients, then noise.
pub fn gaussian_expansion(
    n: usize,
    dim: usize,
    centers: usize,
    kernel: &KernelFunction,
    noise_stddev: f64,
    seed: u64,
) -> Result<Dataset> {
    if dim == 0 || centers == 0 {
        return Err(Error::InvalidParameter(
            "gaussian expansion needs dim >= 1 and centers >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss =
        |rng: &mut ChaCha8Rng, rows, cols| Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal));
    let points: Array2<f64> = gauss(&mut rng, n, dim);
    let z: Array2<f64> = gauss(&mut rng, centers, dim);
    let mut coeff: Array1<f64> = Array1::from_shape_fn(centers, |_| rng.sample(StandardNormal));

    // ||f*||_H^2 = c' K_zz c; rescale to put the target on the unit sphere
    // of the RKHS so risk magnitudes are comparable across seeds.
    let mut kzz = Array2::zeros((centers, centers));
    for i in 0..centers {
        for j in 0..=i {
            let v = kernel.eval(z.row(i), z.row(j))?;
            kzz[(i, j)] = v;
            kzz[(j, i)] = v;
        }
    }
    let norm_sq = coeff.dot(&kzz.dot(&coeff));
    if norm_sq <= 1e-12 {
        return Err(Error::InvalidParameter(
            "kernel expansion collapsed to (numerically) zero RKHS norm".into(),
        ));
    }
    coeff /= norm_sq.sqrt();

    let mut truth = Array1::zeros(n);
    for t in 0..n {
        let mut v = 0.0;
        for j in 0..centers {
            v += coeff[j] * kernel.eval(z.row(j), points.row(t))?;
        }
        truth[t] = v;
    }
    let labels = add_noise(&truth, noise_stddev, &mut rng)?;
    Dataset::new(points, labels, Some(truth), Some(noise_stddev))
}

/// Orthogonal-blocks stream with closed-form effective dimension.
///
/// Point `t` is `sqrt(scale) * e_b` with `b = t mod blocks`, so under the
/// linear kernel the Gram matrix is block-diagonal with one rank-one block
/// of `c = scale` per basis direction — and every point is an exact
/// duplicate of its block mates, exercising the multiset paths of the
/// sampler. The target is a random unit linear functional.
///
/// Draw order: target direction, then noise.
pub fn orthogonal_blocks(
    n: usize,
    blocks: usize,
    scale: f64,
    noise_stddev: f64,
    seed: u64,
) -> Result<Dataset> {
    if blocks == 0 {
        return Err(Error::InvalidParameter("blocks must be >= 1".into()));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "block scale must be a positive real, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta: Array1<f64> = Array1::from_shape_fn(blocks, |_| rng.sample(StandardNormal));
    let norm = theta.dot(&theta).sqrt();
    if norm <= 1e-12 {
        return Err(Error::InvalidParameter("degenerate target direction".into()));
    }
    theta /= norm;

    let mut points = Array2::zeros((n, blocks));
    let mut truth = Array1::zeros(n);
    for t in 0..n {
        let b = t % blocks;
        points[(t, b)] = scale.sqrt();
        truth[t] = scale.sqrt() * theta[b];
    }
    let labels = add_noise(&truth, noise_stddev, &mut rng)?;
    Dataset::new(points, labels, Some(truth), Some(noise_stddev))
}

/// Closed-form effective dimension of the first `t` points of
/// [`orthogonal_blocks`] under the linear kernel.
///
/// Block `b` contributes one eigenvalue `n_b(t) * scale` (its other
/// directions are null), so its ridge leverage mass is
/// `n_b(t) * scale / (n_b(t) * scale + gamma)`; the total is the sum over
/// blocks, with `n_b(t)` the round-robin prefix count.
pub fn blocks_effective_dimension(t: usize, blocks: usize, scale: f64, gamma: f64) -> f64 {
    (0..blocks)
        .map(|b| {
            let n_b = t / blocks + usize::from(b < t % blocks);
            let lam = n_b as f64 * scale;
            lam / (lam + gamma)
        })
        .sum()
}

fn add_noise(truth: &Array1<f64>, noise_stddev: f64, rng: &mut ChaCha8Rng) -> Result<Array1<f64>> {
    if !(noise_stddev >= 0.0) || !noise_stddev.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise stddev must be a finite nonnegative real, got {noise_stddev}"
        )));
    }
    if noise_stddev == 0.0 {
        return Ok(truth.clone());
    }
    let dist = Normal::new(0.0, noise_stddev)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    Ok(truth.mapv(|f| f + dist.sample(rng)))
}

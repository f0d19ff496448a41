//! Kernel functions and incremental construction of kernel columns.
//!
//! A positive definite kernel `K` turns a stream of points `x_1, x_2, ...`
//! into an implicit Gram matrix that grows by one bordered row/column per
//! step. The streaming algorithms in this crate never materialize that
//! matrix; they work from [`KernelColumn`] values (the new row of the
//! bordered matrix) and from kernel entries between retained points.
//! [`full_matrix`] exists for oracles and desk-scale verification.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// A positive definite kernel function on `R^d`.
///
/// Three families are supported, chosen for their spectral variety:
/// the Gaussian kernel (unit diagonal, fast eigendecay), the linear
/// kernel (rank bounded by `d`), and the polynomial kernel (full-rank
/// with offset, diagonal well away from one).
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFunction {
    /// `exp(-||x - y||^2 / (2 b^2))` with bandwidth `b > 0`.
    Gaussian { bandwidth: f64 },
    /// Plain dot product `x . y`.
    Linear,
    /// `(x . y + offset)^degree` with `degree >= 1`, `offset >= 0`.
    Polynomial { degree: u32, offset: f64 },
}

impl KernelFunction {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self::Gaussian { bandwidth })
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidParameter("polynomial degree must be >= 1".into()));
        }
        if !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "polynomial offset must be nonnegative, got {offset}"
            )));
        }
        Ok(Self::Polynomial { degree, offset })
    }

    /// Evaluates `K(x, y)`. Deterministic; symmetric in its arguments.
    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(x.len(), y.len()));
        }
        Ok(match self {
            Self::Gaussian { bandwidth } => {
                let sq: f64 = x
                    .iter()
                    .zip(y.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
            Self::Linear => x.dot(&y),
            Self::Polynomial { degree, offset } => (x.dot(&y) + offset).powi(*degree as i32),
        })
    }
}

/// The bordering payload produced when point `index` joins the stream:
/// kernel values against every earlier point plus the self-similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelColumn {
    /// Zero-based stream position of the new point.
    pub index: usize,
    /// `cross[i] = K(x_index, x_i)` for `i < index`.
    pub cross: Array1<f64>,
    /// `K(x_index, x_index)`.
    pub diag: f64,
}

/// Builds the kernel column for the point at stream position `index`
/// (zero-based), i.e. the new row of the bordered Gram matrix.
pub fn column(kernel: &KernelFunction, dataset: &Dataset, index: usize) -> Result<KernelColumn> {
    let n = dataset.len();
    if index >= n {
        return Err(Error::IndexOutOfRange { index, limit: n });
    }
    let x = dataset.point(index);
    let mut cross = Array1::zeros(index);
    for i in 0..index {
        cross[i] = kernel.eval(x, dataset.point(i))?;
    }
    let diag = kernel.eval(x, x)?;
    Ok(KernelColumn { index, cross, diag })
}

/// Materializes the leading `t x t` Gram matrix. Oracle/testing use only;
/// the streaming path never calls this.
pub fn full_matrix(kernel: &KernelFunction, dataset: &Dataset, t: usize) -> Result<Array2<f64>> {
    if t > dataset.len() {
        return Err(Error::IndexOutOfRange { index: t, limit: dataset.len() });
    }
    let mut gram = Array2::zeros((t, t));
    for i in 0..t {
        for j in 0..=i {
            let v = kernel.eval(dataset.point(i), dataset.point(j))?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}

/// Read access to kernel entries addressed by stream index.
///
/// The leverage-score estimator and the Nystrom sketch only ever need
/// entries between a handful of retained indices; this trait lets them
/// run off live kernel evaluations, a precomputed Gram matrix, or an
/// instrumented counter without caring which.
pub trait KernelAccess {
    fn entry(&self, i: usize, j: usize) -> f64;
}

/// Kernel access backed by a dataset: entries are evaluated on demand.
pub struct PointsKernel<'a> {
    kernel: &'a KernelFunction,
    points: ArrayView2<'a, f64>,
}

impl<'a> PointsKernel<'a> {
    pub fn new(kernel: &'a KernelFunction, dataset: &'a Dataset) -> Self {
        Self { kernel, points: dataset.points() }
    }

    pub fn from_points(kernel: &'a KernelFunction, points: ArrayView2<'a, f64>) -> Self {
        Self { kernel, points }
    }
}

impl KernelAccess for PointsKernel<'_> {
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel
            .eval(self.points.row(i), self.points.row(j))
            .expect("rows of one matrix share a dimension")
    }
}

/// Kernel access backed by an explicit Gram matrix.
pub struct GramKernel<'a>(pub ArrayView2<'a, f64>);

impl KernelAccess for GramKernel<'_> {
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use ndarray_linalg::{EigValsh, UPLO};
    use proptest::prelude::*;

    use crate::dataset::Dataset;

    fn ds(points: Array2<f64>) -> Dataset {
        let n = points.nrows();
        Dataset::new(points, Array1::zeros(n), None, None).unwrap()
    }

    #[test]
    fn gaussian_self_similarity_is_one() {
        let k = KernelFunction::gaussian(1.0).unwrap();
        let x = array![0.3, -1.2, 4.0];
        assert_eq!(k.eval(x.view(), x.view()).unwrap(), 1.0);
    }

    #[test]
    fn linear_is_dot_product() {
        let k = KernelFunction::Linear;
        let v = k
            .eval(array![1.0, 2.0].view(), array![3.0, 4.0].view())
            .unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn polynomial_matches_closed_form() {
        let k = KernelFunction::polynomial(2, 1.0).unwrap();
        let x = array![1.0, 0.0];
        assert_eq!(k.eval(x.view(), x.view()).unwrap(), 4.0);
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        let k = KernelFunction::Linear;
        let err = k
            .eval(array![1.0, 2.0].view(), array![1.0].view())
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(2, 1)));
    }

    #[test]
    fn first_column_is_diag_only() {
        let k = KernelFunction::gaussian(1.0).unwrap();
        let d = ds(array![[1.0, 2.0], [3.0, 4.0]]);
        let c = column(&k, &d, 0).unwrap();
        assert_eq!(c.cross.len(), 0);
        assert_eq!(c.diag, 1.0);
    }

    #[test]
    fn duplicated_point_has_unit_cross() {
        let k = KernelFunction::gaussian(0.7).unwrap();
        let d = ds(array![[1.0, 2.0], [1.0, 2.0]]);
        let c = column(&k, &d, 1).unwrap();
        assert_eq!(c.cross.len(), 1);
        assert_eq!(c.cross[0], 1.0);
    }

    #[test]
    fn column_out_of_range_errors() {
        let k = KernelFunction::Linear;
        let d = ds(array![[1.0], [2.0]]);
        assert!(matches!(
            column(&k, &d, 2).unwrap_err(),
            Error::IndexOutOfRange { index: 2, limit: 2 }
        ));
    }

    #[test]
    fn columns_reassemble_full_matrix() {
        let k = KernelFunction::polynomial(2, 0.5).unwrap();
        let d = ds(array![
            [0.2, 1.0],
            [-0.4, 0.3],
            [1.5, -0.7],
            [0.0, 0.0],
            [2.0, 2.0]
        ]);
        let n = d.len();
        let gram = full_matrix(&k, &d, n).unwrap();
        for t in 0..n {
            let c = column(&k, &d, t).unwrap();
            for i in 0..t {
                assert_eq!(c.cross[i], gram[(t, i)]);
            }
            assert_eq!(c.diag, gram[(t, t)]);
        }
    }

    #[test]
    fn one_by_one_matrix() {
        let k = KernelFunction::gaussian(2.0).unwrap();
        let d = ds(array![[5.0]]);
        let gram = full_matrix(&k, &d, 1).unwrap();
        assert_eq!(gram, array![[1.0]]);
    }

    #[test]
    fn orthonormal_linear_points_give_identity() {
        let k = KernelFunction::Linear;
        let d = ds(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let gram = full_matrix(&k, &d, 3).unwrap();
        assert_eq!(gram, Array2::<f64>::eye(3));
    }

    #[test]
    fn full_matrix_is_bitwise_symmetric() {
        let k = KernelFunction::gaussian(1.3).unwrap();
        let d = ds(array![[0.1, 0.2], [0.9, -0.5], [-2.0, 1.0], [0.3, 0.3]]);
        let gram = full_matrix(&k, &d, 4).unwrap();
        assert_eq!(gram, gram.t().to_owned());
    }

    #[test]
    fn points_kernel_matches_gram_kernel() {
        let k = KernelFunction::gaussian(0.9).unwrap();
        let d = ds(array![[0.0, 1.0], [1.0, 0.5], [0.2, -0.3]]);
        let gram = full_matrix(&k, &d, 3).unwrap();
        let live = PointsKernel::new(&k, &d);
        let stored = GramKernel(gram.view());
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(live.entry(i, j), stored.entry(i, j), epsilon = 0.0);
            }
        }
    }

    fn arb_kernel() -> impl Strategy<Value = KernelFunction> {
        prop_oneof![
            (0.3f64..3.0).prop_map(|b| KernelFunction::Gaussian { bandwidth: b }),
            Just(KernelFunction::Linear),
            (1u32..4, 0.0f64..2.0)
                .prop_map(|(d, o)| KernelFunction::Polynomial { degree: d, offset: o }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Every generated Gram matrix is PSD up to the crate tolerance.
        #[test]
        fn gram_matrices_are_psd(
            kernel in arb_kernel(),
            rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..8),
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let d = ds(Array2::from_shape_vec((n, 3), flat).unwrap());
            let gram = full_matrix(&kernel, &d, n).unwrap();
            let eigs = gram.eigvalsh(UPLO::Lower).unwrap();
            let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-8 * max.max(1e-300));
        }

        /// Kernel evaluation is symmetric.
        #[test]
        fn eval_is_symmetric(
            kernel in arb_kernel(),
            x in prop::collection::vec(-3.0f64..3.0, 4),
            y in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let x = Array1::from_vec(x);
            let y = Array1::from_vec(y);
            let a = kernel.eval(x.view(), y.view()).unwrap();
            let b = kernel.eval(y.view(), x.view()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

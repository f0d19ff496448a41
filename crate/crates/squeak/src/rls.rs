//! Ridge leverage scores: the exact oracle and the dictionary-based
//! streaming estimator.
//!
//! The ridge leverage score (RLS) of column `i` of a kernel matrix `K` is
//! `tau_i = [K (K + gamma I)^{-1}]_{ii}` — the influence of point `i` on a
//! `gamma`-regularized kernel regression. Their sum is the effective
//! dimension, the soft rank that controls how many columns a sketch must
//! retain. [`exact_rls`] computes scores from the full matrix (oracle and
//! verification use); [`RlsEstimator`] computes the streaming estimates
//! from a dictionary and one new column, touching only kernel entries
//! among retained points and the new point.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{Cholesky, Diag, EigValsh, SolveTriangular, UPLO};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::kernels::KernelAccess;

/// Relative tolerance for PSD assertions, uniform across the crate:
/// a symmetric matrix passes when `min_eig >= -PSD_TOL * max_eig`.
pub const PSD_TOL: f64 = 1e-8;

/// Accuracy/regularization bundle for leverage-score computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsConfig {
    gamma: f64,
    epsilon: f64,
}

impl RlsConfig {
    /// Requires `gamma > 0` and `epsilon in [0, 1)`. `epsilon = 0` is the
    /// degenerate exact end (`alpha = 1`), used by oracles and tests.
    pub fn new(gamma: f64, epsilon: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be a positive real, got {gamma}"
            )));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        Ok(Self { gamma, epsilon })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The accuracy ratio `alpha = (1 + epsilon) / (1 - epsilon) >= 1`.
    pub fn alpha(&self) -> f64 {
        (1.0 + self.epsilon) / (1.0 - self.epsilon)
    }
}

/// One streaming leverage-score estimate `tau~_i`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlsEstimate {
    pub index: usize,
    pub value: f64,
}

/// Exact ridge leverage scores `tau_i = [K (K + gamma I)^{-1}]_{ii}`.
///
/// `K` must be symmetric PSD up to the crate tolerance ([`PSD_TOL`]
/// relative to the largest eigenvalue); scores are clamped to `[0, 1]`
/// against floating-point fuzz. The inverse is applied through a Cholesky
/// factorization of `K + gamma I`, never formed explicitly.
pub fn exact_rls(k: ArrayView2<f64>, gamma: f64) -> Result<Array1<f64>> {
    if k.nrows() != k.ncols() {
        return Err(Error::DimensionMismatch(k.nrows(), k.ncols()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be a positive real, got {gamma}"
        )));
    }
    let t = k.nrows();
    if t == 0 {
        return Ok(Array1::zeros(0));
    }
    check_psd(k)?;

    let mut shifted = k.to_owned();
    for i in 0..t {
        shifted[(i, i)] += gamma;
    }
    let l = shifted.cholesky(UPLO::Lower).map_err(|e| {
        Error::NotPsd(format!("K + gamma I failed to factorize (gamma = {gamma}): {e}"))
    })?;
    // X = (K + gamma I)^{-1} K via two triangular solves; its diagonal
    // equals that of K (K + gamma I)^{-1} because the two factors commute.
    let y = l.solve_triangular(UPLO::Lower, Diag::NonUnit, &k.to_owned())?;
    let x = l.t().solve_triangular(UPLO::Upper, Diag::NonUnit, &y)?;
    Ok(Array1::from_shape_fn(t, |i| x[(i, i)].clamp(0.0, 1.0)))
}

/// Effective dimension `d_eff = sum_i tau_i` of a leverage-score vector.
pub fn effective_dimension(rls: ArrayView1<f64>) -> f64 {
    debug_assert!(rls.iter().all(|v| (0.0..=1.0).contains(v)));
    rls.sum()
}

/// Verifies `min_eig >= -PSD_TOL * max_eig` for a symmetric matrix.
///
/// Fast path: if `K + PSD_TOL * max_diag * I` admits a Cholesky
/// factorization the matrix is PSD well within tolerance (for PSD-up-to-
/// fuzz matrices `max_diag <= max_eig`). Only on factorization failure is
/// a full eigendecomposition consulted to decide against the exact
/// tolerance and report the offending eigenvalue.
pub(crate) fn check_psd(k: ArrayView2<f64>) -> Result<()> {
    let t = k.nrows();
    let max_diag = (0..t).map(|i| k[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    if max_diag < 0.0 {
        return Err(Error::NotPsd(format!(
            "matrix has negative diagonal entry {max_diag}"
        )));
    }
    if max_diag > 0.0 {
        let mut probe = k.to_owned();
        let shift = PSD_TOL * max_diag;
        for i in 0..t {
            probe[(i, i)] += shift;
        }
        if probe.cholesky(UPLO::Lower).is_ok() {
            return Ok(());
        }
    }
    let eigs = k.to_owned().eigvalsh(UPLO::Lower)?;
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min < -PSD_TOL * max.max(0.0) {
        return Err(Error::NotPsd(format!(
            "matrix is not PSD within tolerance: min eigenvalue {min:e}, max {max:e}"
        )));
    }
    Ok(())
}

/// Streaming RLS estimates against a frozen dictionary plus one new point.
///
/// With `J` the retained indices together with the new index, `W` the
/// diagonal of aggregate selection weights (the new point enters with
/// weight one — its copies have not been thinned yet), the estimate for
/// `i in J` is
///
/// ```text
/// tau~_i = (1+eps)/(alpha*gamma) * (k_ii - v' (W^0.5 K_JJ W^0.5 + gamma I)^{-1} v),
/// v = W^0.5 K_J,i
/// ```
///
/// clamped to `[0, 1]`. All estimates share one Cholesky factorization of
/// the `(|J|) x (|J|)` core; only kernel entries with both ends in `J` are
/// accessed, which is what makes the surrounding algorithm single-pass.
#[derive(Debug, Clone)]
pub struct RlsEstimator {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl RlsEstimator {
    /// Builds estimates for every `i in J = dict ∪ {new_index}`.
    ///
    /// `new_index` must equal `dict.step()` — the estimator exists exactly
    /// once per arriving point, before the dictionary is updated.
    pub fn new<K: KernelAccess + ?Sized>(
        dict: &Dictionary,
        access: &K,
        new_index: usize,
        config: &RlsConfig,
    ) -> Result<Self> {
        if new_index != dict.step() {
            return Err(Error::ContractViolation(format!(
                "estimator: new index {} does not match dictionary step {}",
                new_index,
                dict.step()
            )));
        }
        let qbar = dict.qbar();
        let mut indices: Vec<usize> = dict.entries().iter().map(|e| e.index).collect();
        indices.push(new_index);
        let mut weights: Vec<f64> = dict.entries().iter().map(|e| e.weight(qbar)).collect();
        weights.push(1.0);
        let m = indices.len();

        let mut k_jj = Array2::zeros((m, m));
        for r in 0..m {
            for c in 0..=r {
                let v = access.entry(indices[r], indices[c]);
                k_jj[(r, c)] = v;
                k_jj[(c, r)] = v;
            }
        }

        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let gamma = config.gamma();
        let mut core = Array2::zeros((m, m));
        for r in 0..m {
            for c in 0..m {
                core[(r, c)] = sw[r] * sw[c] * k_jj[(r, c)];
            }
            core[(r, r)] += gamma;
        }
        let l = core.cholesky(UPLO::Lower).map_err(|e| {
            Error::NotPsd(format!(
                "dictionary core matrix failed to factorize (gamma = {gamma}): {e}"
            ))
        })?;

        // Columns of V are v_i = W^0.5 K_J,i for every target i in J;
        // one triangular solve gives z_i = L^{-1} v_i for all of them.
        let mut v = k_jj.clone();
        for r in 0..m {
            for c in 0..m {
                v[(r, c)] *= sw[r];
            }
        }
        let z = l.solve_triangular(UPLO::Lower, Diag::NonUnit, &v)?;

        let scale = (1.0 + config.epsilon()) / (config.alpha() * gamma);
        let values = (0..m)
            .map(|i| {
                let quad: f64 = (0..m).map(|r| z[(r, i)] * z[(r, i)]).sum();
                (scale * (k_jj[(i, i)] - quad)).clamp(0.0, 1.0)
            })
            .collect();
        Ok(Self { indices, values })
    }

    /// The estimate for one target; the target must be retained or new.
    pub fn estimate(&self, target: usize) -> Result<RlsEstimate> {
        match self.indices.binary_search(&target) {
            Ok(pos) => Ok(RlsEstimate { index: target, value: self.values[pos] }),
            Err(_) => Err(Error::ContractViolation(format!(
                "RLS of index {target} is not estimable: neither retained nor the new point \
                 (dropped columns are never re-estimated)"
            ))),
        }
    }

    /// All estimates, in ascending index order (new point last).
    pub fn estimates(&self) -> impl Iterator<Item = RlsEstimate> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&index, &value)| RlsEstimate { index, value })
    }
}

/// One-shot convenience wrapper around [`RlsEstimator`] for a single
/// target. When several targets share the same dictionary and new point,
/// construct the estimator once instead.
pub fn estimate_rls<K: KernelAccess + ?Sized>(
    dict: &Dictionary,
    target: usize,
    access: &K,
    new_index: usize,
    config: &RlsConfig,
) -> Result<RlsEstimate> {
    RlsEstimator::new(dict, access, new_index, config)?.estimate(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use ndarray_linalg::Inverse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::dataset::{blocks_effective_dimension, orthogonal_blocks, Dataset};
    use crate::dictionary::{DictEntry, Dictionary};
    use crate::kernels::{full_matrix, GramKernel, KernelFunction};

    fn random_points(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal));
        Dataset::new(pts, Array1::zeros(n), None, None).unwrap()
    }

    fn gaussian_gram(n: usize, seed: u64) -> Array2<f64> {
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let ds = random_points(n, 3, seed);
        full_matrix(&kernel, &ds, n).unwrap()
    }

    /// Dictionary holding every index below `step` at full budget.
    fn full_dictionary(ds: &Dataset, step: usize, qbar: u64) -> Dictionary {
        let entries = (0..step)
            .map(|index| DictEntry {
                index,
                multiplicity: qbar,
                probability: 1.0,
                point: ds.point(index).to_owned(),
            })
            .collect();
        Dictionary::from_entries(entries, qbar, step).unwrap()
    }

    #[test]
    fn config_validates_ranges() {
        assert!(RlsConfig::new(0.0, 0.5).is_err());
        assert!(RlsConfig::new(-1.0, 0.5).is_err());
        assert!(RlsConfig::new(1.0, 1.0).is_err());
        assert!(RlsConfig::new(1.0, -0.1).is_err());
        let c = RlsConfig::new(1.0, 0.5).unwrap();
        assert_eq!(c.alpha(), 3.0);
        assert_eq!(RlsConfig::new(2.0, 0.0).unwrap().alpha(), 1.0);
    }

    #[test]
    fn exact_rls_scalar() {
        let tau = exact_rls(array![[1.0]].view(), 1.0).unwrap();
        assert_abs_diff_eq!(tau[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn exact_rls_identity_matrix() {
        let k = Array2::eye(5);
        let tau = exact_rls(k.view(), 2.0).unwrap();
        for v in &tau {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_rls_matches_inverse_identity() {
        // Independent identity: tau = 1 - gamma * diag((K + gamma I)^{-1}),
        // with the inverse computed through the LU path.
        for seed in 0..5 {
            let k = gaussian_gram(5, seed);
            let gamma = 0.7;
            let tau = exact_rls(k.view(), gamma).unwrap();
            let mut shifted = k.clone();
            for i in 0..5 {
                shifted[(i, i)] += gamma;
            }
            let inv = shifted.inv().unwrap();
            for i in 0..5 {
                assert_abs_diff_eq!(tau[i], 1.0 - gamma * inv[(i, i)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn exact_rls_rejects_indefinite() {
        let k = array![[1.0, 0.0], [0.0, -1.0]];
        assert!(matches!(exact_rls(k.view(), 1.0).unwrap_err(), Error::NotPsd(_)));
        let k = array![[1.0, 0.0], [0.0, -1e-6]];
        assert!(matches!(exact_rls(k.view(), 1.0).unwrap_err(), Error::NotPsd(_)));
    }

    #[test]
    fn exact_rls_tolerates_roundoff_negativity() {
        // min eigenvalue -5e-9 is within 1e-8 * max eigenvalue 1.
        let k = array![[1.0, 0.0], [0.0, -5e-9]];
        let tau = exact_rls(k.view(), 1.0).unwrap();
        assert_abs_diff_eq!(tau[0], 0.5, epsilon = 1e-12);
        assert_eq!(tau[1], 0.0, "negative fuzz must clamp to zero");
    }

    #[test]
    fn exact_rls_rejects_nonsquare() {
        let k = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            exact_rls(k.view(), 1.0).unwrap_err(),
            Error::DimensionMismatch(2, 3)
        ));
    }

    #[test]
    fn effective_dimension_of_identity() {
        let k = Array2::eye(6);
        let tau = exact_rls(k.view(), 0.5).unwrap();
        assert_abs_diff_eq!(effective_dimension(tau.view()), 6.0 / 1.5, epsilon = 1e-10);
        assert_eq!(effective_dimension(Array1::zeros(0).view()), 0.0);
    }

    #[test]
    fn effective_dimension_monotone_in_prefix() {
        let k = gaussian_gram(12, 3);
        let gamma = 0.4;
        let mut prev = 0.0;
        for t in 1..=12 {
            let kt = k.slice(ndarray::s![..t, ..t]);
            let d = effective_dimension(exact_rls(kt, gamma).unwrap().view());
            assert!(d >= prev - 1e-10, "d_eff dropped from {prev} to {d} at t={t}");
            prev = d;
        }
    }

    #[test]
    fn rls_shrink_as_stream_grows() {
        // For nested kernel matrices the score of a fixed column never
        // grows: tau_{t+1,i} <= tau_{t,i} (+ floating slack).
        let k = gaussian_gram(10, 4);
        let gamma = 0.3;
        let mut prev = exact_rls(k.slice(ndarray::s![..1, ..1]), gamma).unwrap();
        for t in 2..=10 {
            let tau = exact_rls(k.slice(ndarray::s![..t, ..t]), gamma).unwrap();
            for i in 0..t - 1 {
                assert!(
                    tau[i] <= prev[i] + 1e-10,
                    "tau[{i}] grew from {} to {} at t={t}",
                    prev[i],
                    tau[i]
                );
            }
            prev = tau;
        }
    }

    #[test]
    fn estimator_scalar_first_point() {
        // Empty dictionary, k_11 = 1, gamma = 1, eps = 0:
        // tau~ = 1 * (1 - 1 * (1+1)^{-1} * 1) = 0.5.
        let dict = Dictionary::new(4).unwrap();
        let gram = array![[1.0]];
        let config = RlsConfig::new(1.0, 0.0).unwrap();
        let est = estimate_rls(&dict, 0, &GramKernel(gram.view()), 0, &config).unwrap();
        assert_abs_diff_eq!(est.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn estimator_with_full_dictionary_is_exact() {
        // Every column retained at full budget and probability one makes
        // the aggregate weight matrix the identity, so with eps = 0 the
        // estimator must reproduce exact_rls on K_{t+1}.
        let config = RlsConfig::new(0.6, 0.0).unwrap();
        for (t, seed) in [(1usize, 10u64), (4, 11), (9, 12)] {
            let ds = random_points(t + 1, 3, seed);
            let kernel = KernelFunction::gaussian(1.0).unwrap();
            let gram = full_matrix(&kernel, &ds, t + 1).unwrap();
            let dict = full_dictionary(&ds, t, 3);
            let estimator =
                RlsEstimator::new(&dict, &GramKernel(gram.view()), t, &config).unwrap();
            let exact = exact_rls(gram.view(), config.gamma()).unwrap();
            for est in estimator.estimates() {
                assert_abs_diff_eq!(est.value, exact[est.index], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn estimator_with_full_dictionary_scales_by_one_minus_eps() {
        // Same reduction at eps = 0.5: (1+eps)/alpha = 1-eps, so the
        // estimate is exactly half the exact score.
        let config = RlsConfig::new(0.6, 0.5).unwrap();
        let t = 6;
        let ds = random_points(t + 1, 3, 13);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let gram = full_matrix(&kernel, &ds, t + 1).unwrap();
        let dict = full_dictionary(&ds, t, 3);
        let estimator = RlsEstimator::new(&dict, &GramKernel(gram.view()), t, &config).unwrap();
        let exact = exact_rls(gram.view(), config.gamma()).unwrap();
        for est in estimator.estimates() {
            assert_abs_diff_eq!(est.value, 0.5 * exact[est.index], epsilon = 1e-8);
        }
    }

    #[test]
    fn estimator_rejects_dropped_and_unknown_targets() {
        let ds = random_points(4, 2, 14);
        let entries = vec![
            DictEntry { index: 0, multiplicity: 2, probability: 0.5, point: ds.point(0).to_owned() },
            DictEntry { index: 2, multiplicity: 1, probability: 0.5, point: ds.point(2).to_owned() },
        ];
        let dict = Dictionary::from_entries(entries, 4, 3).unwrap();
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let gram = full_matrix(&kernel, &ds, 4).unwrap();
        let config = RlsConfig::new(1.0, 0.25).unwrap();
        let estimator = RlsEstimator::new(&dict, &GramKernel(gram.view()), 3, &config).unwrap();
        assert!(estimator.estimate(0).is_ok());
        assert!(estimator.estimate(3).is_ok());
        assert!(matches!(
            estimator.estimate(1).unwrap_err(),
            Error::ContractViolation(_)
        ));
        assert!(matches!(
            estimator.estimate(7).unwrap_err(),
            Error::ContractViolation(_)
        ));
    }

    #[test]
    fn estimator_requires_matching_new_index() {
        let dict = Dictionary::new(4).unwrap();
        let gram = array![[1.0]];
        let config = RlsConfig::new(1.0, 0.0).unwrap();
        assert!(matches!(
            RlsEstimator::new(&dict, &GramKernel(gram.view()), 5, &config).unwrap_err(),
            Error::ContractViolation(_)
        ));
    }

    #[test]
    fn estimator_sees_only_aggregate_weights() {
        // (Q = 2, p = 0.5) and (Q = 4, p = 1) both aggregate to weight one
        // under qbar = 4; the estimates must agree to machine precision.
        let ds = random_points(3, 2, 15);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let gram = full_matrix(&kernel, &ds, 3).unwrap();
        let config = RlsConfig::new(0.8, 0.25).unwrap();
        let make = |mult: u64, prob: f64| {
            let entries = vec![
                DictEntry { index: 0, multiplicity: mult, probability: prob, point: ds.point(0).to_owned() },
                DictEntry { index: 1, multiplicity: 3, probability: 0.75, point: ds.point(1).to_owned() },
            ];
            let dict = Dictionary::from_entries(entries, 4, 2).unwrap();
            RlsEstimator::new(&dict, &GramKernel(gram.view()), 2, &config).unwrap()
        };
        let a = make(2, 0.5);
        let b = make(4, 1.0);
        for (x, y) in a.estimates().zip(b.estimates()) {
            assert_eq!(x.index, y.index);
            assert_abs_diff_eq!(x.value, y.value, epsilon = 1e-14);
        }
    }

    #[test]
    fn estimator_clamps_into_unit_interval() {
        // A starved dictionary (aggregate weight 1/1000) barely suppresses
        // anything, so the raw estimate for a retained index approaches
        // k_ii / gamma = 5 and must be clamped to one.
        let ds = random_points(2, 2, 16);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let gram = full_matrix(&kernel, &ds, 2).unwrap();
        let entries = vec![DictEntry {
            index: 0,
            multiplicity: 1,
            probability: 1.0,
            point: ds.point(0).to_owned(),
        }];
        let dict = Dictionary::from_entries(entries, 1000, 1).unwrap();
        let config = RlsConfig::new(0.2, 0.0).unwrap();
        let estimator = RlsEstimator::new(&dict, &GramKernel(gram.view()), 1, &config).unwrap();
        assert_eq!(estimator.estimate(0).unwrap().value, 1.0);
    }

    #[test]
    fn blocks_dataset_matches_closed_form_d_eff() {
        let ds = orthogonal_blocks(11, 3, 1.7, 0.0, 21).unwrap();
        let kernel = KernelFunction::Linear;
        let gamma = 0.8;
        for t in [5usize, 11] {
            let gram = full_matrix(&kernel, &ds, t).unwrap();
            let d = effective_dimension(exact_rls(gram.view(), gamma).unwrap().view());
            let closed = blocks_effective_dimension(t, 3, 1.7, gamma);
            assert_abs_diff_eq!(d, closed, epsilon = 1e-8);
        }
    }
}

//! Reference samplers: uniform column sampling and oracle sampling from
//! exact ridge leverage scores.
//!
//! Both produce ordinary [`Dictionary`] values so the comparison against
//! the streaming sampler isolates exactly one variable — the sampling
//! distribution — while the Nystrom reconstruction path stays shared.
//! Baseline entries carry an empty point payload: they index a
//! materialized kernel matrix (or a dataset through [`KernelAccess`]) and
//! are never streamed, so the stored point is never consulted.
//!
//! [`d_max`] computes the maximal degree of freedom `n * max_i tau_i`,
//! the quantity that governs how many columns *uniform* sampling needs —
//! always at least the effective dimension that leverage-score sampling
//! needs, and typically far larger on skewed spectra.
//!
//! Two further rows of the usual comparison table (a two-pass
//! leverage-score method and a streaming coreset estimator) are not
//! implemented here: their procedures are specified in their original
//! papers, not in the material this crate follows.
//!
//! [`KernelAccess`]: crate::kernels::KernelAccess

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};

use crate::dictionary::{DictEntry, Dictionary};
use crate::error::{Error, Result};
use crate::rls::{effective_dimension, exact_rls};

fn dictionary_from_counts(
    counts: BTreeMap<usize, u64>,
    prob_of: impl Fn(usize) -> f64,
    qbar: u64,
    step: usize,
) -> Result<Dictionary> {
    let entries: Vec<DictEntry> = counts
        .into_iter()
        .map(|(index, multiplicity)| DictEntry {
            index,
            multiplicity,
            probability: prob_of(index),
            point: Array1::zeros(0),
        })
        .collect();
    Dictionary::from_entries(entries, qbar, step)
}

/// Uniform baseline: `m` indices drawn i.i.d. (with replacement) from
/// `{0, .., n-1}`, stored with probability `1/n` and budget `qbar = m` so
/// each draw carries selection weight `1/(m * (1/n))` — the convention
/// the reconstruction path expects.
pub fn uniform_sample<R: Rng + ?Sized>(n: usize, m: u64, rng: &mut R) -> Result<Dictionary> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(
            "uniform sampling needs n >= 1 and m >= 1".into(),
        ));
    }
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..m {
        *counts.entry(rng.gen_range(0..n)).or_insert(0) += 1;
    }
    dictionary_from_counts(counts, |_| 1.0 / n as f64, m, n)
}

/// Exhaustive hook: every index exactly once, weighted so all aggregate
/// selection weights are one. The induced approximation is then the full
/// ridge identity `K (K + gamma I)^{-1} K` — the best any dictionary can
/// do — which makes this the reference point for sampling baselines.
pub fn exhaustive(n: usize) -> Result<Dictionary> {
    if n == 0 {
        return Err(Error::InvalidParameter("exhaustive sampling needs n >= 1".into()));
    }
    let counts: BTreeMap<usize, u64> = (0..n).map(|i| (i, 1)).collect();
    dictionary_from_counts(counts, |_| 1.0 / n as f64, n as u64, n)
}

/// Oracle baseline: `m` indices drawn i.i.d. proportionally to the exact
/// ridge leverage scores of `k`, i.e. `p_i = tau_i / d_eff`. Each entry
/// stores its own draw probability, budget `qbar = m`.
pub fn oracle_rls_sample<R: Rng + ?Sized>(
    k: ArrayView2<f64>,
    gamma: f64,
    m: u64,
    rng: &mut R,
) -> Result<Dictionary> {
    if m == 0 {
        return Err(Error::InvalidParameter("oracle sampling needs m >= 1".into()));
    }
    let tau = exact_rls(k, gamma)?;
    let d_eff = effective_dimension(tau.view());
    if !(d_eff > 0.0) {
        return Err(Error::InvalidParameter(
            "oracle sampling needs a nonzero effective dimension".into(),
        ));
    }
    let dist = WeightedIndex::new(tau.iter().cloned())
        .map_err(|e| Error::InvalidParameter(format!("leverage-score distribution: {e}")))?;
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..m {
        *counts.entry(dist.sample(rng)).or_insert(0) += 1;
    }
    dictionary_from_counts(counts, |i| tau[i] / d_eff, m, k.nrows())
}

/// Maximal degree of freedom `d_max = n * max_i tau_i`.
///
/// `n` is the stream length the scores were computed at (i.e.
/// `rls.len()`). Since `max_i tau_i >= (1/n) * sum_i tau_i`, this always
/// dominates the effective dimension.
pub fn d_max(rls: ArrayView1<f64>, n: usize) -> f64 {
    debug_assert_eq!(n, rls.len());
    let max = rls.iter().cloned().fold(0.0f64, f64::max);
    n as f64 * max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, ArrayView2};
    use ndarray_linalg::{EigValsh, Inverse, UPLO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use crate::dataset::Dataset;
    use crate::kernels::{full_matrix, GramKernel, KernelFunction};
    use crate::nystrom::{build_sketch, gamma_approx_check};

    fn gaussian_gram(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_fn((n, 3), |_| rng.sample(StandardNormal));
        let ds = Dataset::new(pts, Array1::zeros(n), None, None).unwrap();
        full_matrix(&KernelFunction::gaussian(1.0).unwrap(), &ds, n).unwrap()
    }

    fn numeric_rank(m: ArrayView2<f64>) -> usize {
        let eigs = m.to_owned().eigvalsh(UPLO::Lower).unwrap();
        let max = eigs.iter().cloned().fold(0.0f64, f64::max);
        eigs.iter().filter(|&&e| e > 1e-10 * max.max(1e-300)).count()
    }

    #[test]
    fn uniform_single_draw_gives_rank_one_sketch() {
        let gram = gaussian_gram(6, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dict = uniform_sample(6, 1, &mut rng).unwrap();
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.total_copies(), 1);
        let access = GramKernel(gram.view());
        let sketch = build_sketch(&dict, &access, 0.5).unwrap();
        assert!(numeric_rank(sketch.materialize().unwrap().view()) <= 1);
    }

    #[test]
    fn exhaustive_dictionary_reaches_ridge_identity() {
        let n = 7;
        let gamma = 0.8;
        let gram = gaussian_gram(n, 2);
        let dict = exhaustive(n).unwrap();
        assert_eq!(dict.len(), n);
        for (_, w) in dict.selection_weights() {
            assert_abs_diff_eq!(w, 1.0, epsilon = 1e-15);
        }
        let access = GramKernel(gram.view());
        let sketch = build_sketch(&dict, &access, gamma).unwrap();
        let k_tilde = sketch.materialize().unwrap();
        let mut shifted = gram.clone();
        for i in 0..n {
            shifted[(i, i)] += gamma;
        }
        let oracle = gram.dot(&shifted.inv().unwrap()).dot(&gram);
        for i in 0..n {
            for j in 0..n {
                assert_abs_diff_eq!(k_tilde[(i, j)], oracle[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn uniform_frequencies_are_uniform() {
        // 10^5 draws over 10 indices: every count within 3 standard errors
        // of 10^4.
        let n = 10;
        let draws = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dict = uniform_sample(n, draws, &mut rng).unwrap();
        let band = 3.0 * (draws as f64 * 0.1 * 0.9).sqrt();
        for e in dict.entries() {
            assert_eq!(e.probability, 0.1);
            let dev = (e.multiplicity as f64 - 10_000.0).abs();
            assert!(dev <= band, "index {} count {}", e.index, e.multiplicity);
        }
    }

    #[test]
    fn oracle_on_identity_kernel_is_uniform() {
        // Equal scores: every index equally likely.
        let n = 8;
        let k = Array2::<f64>::eye(n);
        let draws = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dict = oracle_rls_sample(k.view(), 1.0, draws, &mut rng).unwrap();
        let p = 1.0 / n as f64;
        let band = 3.0 * (draws as f64 * p * (1.0 - p)).sqrt();
        for e in dict.entries() {
            assert_abs_diff_eq!(e.probability, p, epsilon = 1e-12);
            let dev = (e.multiplicity as f64 - draws as f64 * p).abs();
            assert!(dev <= band, "index {} count {}", e.index, e.multiplicity);
        }
    }

    #[test]
    fn oracle_frequencies_match_scores() {
        let n = 10;
        let gamma = 0.5;
        let k = gaussian_gram(n, 5);
        let tau = exact_rls(k.view(), gamma).unwrap();
        let d_eff = effective_dimension(tau.view());
        let draws = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dict = oracle_rls_sample(k.view(), gamma, draws, &mut rng).unwrap();
        for e in dict.entries() {
            let p = tau[e.index] / d_eff;
            assert_abs_diff_eq!(e.probability, p, epsilon = 1e-12);
            let band = 3.0 * (draws as f64 * p * (1.0 - p)).sqrt();
            let dev = (e.multiplicity as f64 - draws as f64 * p).abs();
            assert!(dev <= band, "index {} count {}", e.index, e.multiplicity);
        }
    }

    #[test]
    fn d_max_equals_d_eff_on_flat_spectra() {
        let n = 6;
        let gamma = 0.5;
        let tau = exact_rls(Array2::<f64>::eye(n).view(), gamma).unwrap();
        assert_abs_diff_eq!(
            d_max(tau.view(), n),
            effective_dimension(tau.view()),
            epsilon = 1e-10
        );
        // n = 1: both are tau_1.
        let tau1 = exact_rls(ndarray::array![[2.0]].view(), gamma).unwrap();
        assert_abs_diff_eq!(d_max(tau1.view(), 1), tau1[0], epsilon = 1e-15);
    }

    #[test]
    fn d_max_dominates_d_eff_on_skewed_spectra() {
        // One strong orthogonal direction among weak ones: uniform
        // sampling would need ~n columns to catch it, and d_max says so.
        let n = 12;
        let rho = 0.01;
        let mut k = Array2::<f64>::eye(n) * rho;
        k[(0, 0)] = 1.0;
        let gamma = 0.1;
        let tau = exact_rls(k.view(), gamma).unwrap();
        let deff = effective_dimension(tau.view());
        let dmax = d_max(tau.view(), n);
        assert!(
            dmax > 5.0 * deff,
            "expected clear separation, got d_max {dmax} vs d_eff {deff}"
        );
    }

    #[test]
    fn d_max_never_below_d_eff() {
        for seed in 0..5 {
            let k = gaussian_gram(9, 100 + seed);
            for gamma in [0.1, 1.0, 10.0] {
                let tau = exact_rls(k.view(), gamma).unwrap();
                assert!(d_max(tau.view(), 9) >= effective_dimension(tau.view()) - 1e-12);
            }
        }
    }

    #[test]
    fn oracle_dictionaries_at_prescribed_size_pass_approx_check() {
        // m = ceil(4/eps^2 * d_eff * log(n/delta)) oracle draws must yield
        // a gamma-approximation in at least a 1-delta fraction of seeds.
        let n = 48;
        let gamma = 1.0;
        let epsilon = 0.5;
        let delta = 0.2;
        let gram = gaussian_gram(n, 7);
        let tau = exact_rls(gram.view(), gamma).unwrap();
        let d_eff = effective_dimension(tau.view());
        let m = (4.0 / (epsilon * epsilon) * d_eff * (n as f64 / delta).ln()).ceil() as u64;

        let ensembles = 20;
        let mut passes = 0;
        for seed in 0..ensembles {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let dict = oracle_rls_sample(gram.view(), gamma, m, &mut rng).unwrap();
            let access = GramKernel(gram.view());
            let sketch = build_sketch(&dict, &access, gamma).unwrap();
            let report =
                gamma_approx_check(gram.view(), sketch.materialize().unwrap().view(), gamma, epsilon)
                    .unwrap();
            passes += u32::from(report.holds);
        }
        let needed = ((1.0 - delta) * ensembles as f64).ceil() as u32;
        assert!(passes >= needed, "only {passes}/{ensembles} ensembles passed");
    }

    #[test]
    fn sampler_input_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(uniform_sample(0, 1, &mut rng).is_err());
        assert!(uniform_sample(5, 0, &mut rng).is_err());
        assert!(exhaustive(0).is_err());
        let z = Array2::<f64>::zeros((3, 3));
        assert!(oracle_rls_sample(z.view(), 1.0, 5, &mut rng).is_err());
    }
}

//! The streaming sampler: one pass over the data, one kernel column per
//! step, a weighted dictionary of retained columns as the only state.
//!
//! Each arriving point triggers the same pipeline:
//!
//! 1. estimate the ridge leverage score of every retained index and of
//!    the new point against the current dictionary ([`RlsEstimator`]);
//! 2. update retention probabilities monotonically
//!    ([`probability_update`]; the new point starts from probability 1);
//! 3. [`Dictionary::shrink`] resamples existing copies down to the new
//!    probabilities, then [`Dictionary::expand`] draws copies of the new
//!    point.
//!
//! All randomness is consumed inside shrink/expand, so a `(seed, data,
//! config)` triple fully determines the run.
//!
//! Besides the dictionary, the state carries the kernel entries *among*
//! retained points, maintained incrementally: entries of dropped points
//! are discarded, and the new point contributes exactly the column that
//! was just evaluated. This cache is what keeps the per-step cost at
//! `distinct + 1` fresh kernel evaluations — one per retained point plus
//! the diagonal — instead of re-evaluating the dictionary block every
//! step. No kernel entry between two points that are neither retained
//! nor current is ever requested.
//!
//! [`RlsEstimator`]: crate::rls::RlsEstimator
//! [`probability_update`]: crate::dictionary::probability_update

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::dictionary::{probability_update, Dictionary};
use crate::error::{Error, Result};
use crate::kernels::{KernelAccess, KernelColumn, KernelFunction};
use crate::rls::{RlsConfig, RlsEstimate, RlsEstimator};

/// Parameters of a streaming run: the leverage-score configuration
/// (regularization and accuracy), the failure probability, and the
/// per-point copy budget `qbar`.
#[derive(Debug, Clone)]
pub struct SqueakConfig {
    rls: RlsConfig,
    delta: f64,
    qbar_constant: f64,
    n_hint: usize,
    seed: u64,
    qbar: u64,
    #[cfg(test)]
    force_full_estimates: bool,
}

impl SqueakConfig {
    /// Builds a configuration with the budget derived from the standard
    /// formula `qbar = ceil(c_q * alpha / eps^2 * ln(n_hint / delta))`,
    /// where `alpha = (1 + eps) / (1 - eps)`.
    ///
    /// `qbar_constant` is the leading constant `c_q` (the analysis hides
    /// it inside O-notation; it is exposed so experiments can tune slack
    /// explicitly), and `n_hint` is the anticipated stream length. The
    /// formula diverges at `eps = 0`; use [`SqueakConfig::with_budget`]
    /// to run with an explicit budget instead.
    pub fn new(
        rls: RlsConfig,
        delta: f64,
        qbar_constant: f64,
        n_hint: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::validate_common(&rls, delta, n_hint)?;
        if !(qbar_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "budget constant must be positive, got {qbar_constant}"
            )));
        }
        let eps = rls.epsilon();
        if eps <= 0.0 {
            return Err(Error::InvalidParameter(
                "the budget formula diverges at epsilon = 0; use an explicit budget".into(),
            ));
        }
        let raw = (qbar_constant * rls.alpha() / (eps * eps) * (n_hint as f64 / delta).ln()).ceil();
        if !raw.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "budget formula overflowed (raw value {raw})"
            )));
        }
        Ok(Self {
            rls,
            delta,
            qbar_constant,
            n_hint,
            seed,
            qbar: (raw as u64).max(1),
            #[cfg(test)]
            force_full_estimates: false,
        })
    }

    /// Builds a configuration with an explicitly chosen copy budget,
    /// bypassing the formula. This is the only way to stream with
    /// `eps = 0` (exact-estimation semantics). The formula inputs are
    /// recorded as zero.
    pub fn with_budget(rls: RlsConfig, delta: f64, qbar: u64, seed: u64) -> Result<Self> {
        Self::validate_common(&rls, delta, 1)?;
        if qbar == 0 {
            return Err(Error::InvalidParameter("budget must be at least 1".into()));
        }
        Ok(Self {
            rls,
            delta,
            qbar_constant: 0.0,
            n_hint: 0,
            seed,
            qbar,
            #[cfg(test)]
            force_full_estimates: false,
        })
    }

    fn validate_common(rls: &RlsConfig, delta: f64, n_hint: usize) -> Result<()> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "failure probability must lie in (0, 1), got {delta}"
            )));
        }
        if n_hint == 0 {
            return Err(Error::InvalidParameter("stream-length hint must be at least 1".into()));
        }
        if rls.gamma() < 1.0 {
            log::warn!(
                "regularization {} is below 1; the space guarantee is only analyzed for \
                 gamma >= 1, though all quantities remain well defined",
                rls.gamma()
            );
        }
        Ok(())
    }

    /// Leverage-score configuration (regularization and accuracy).
    pub fn rls(&self) -> &RlsConfig {
        &self.rls
    }

    /// Failure probability `delta`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Leading constant `c_q` of the budget formula (zero when the
    /// budget was set explicitly).
    pub fn qbar_constant(&self) -> f64 {
        self.qbar_constant
    }

    /// Stream-length hint the budget was derived from (zero when the
    /// budget was set explicitly).
    pub fn n_hint(&self) -> usize {
        self.n_hint
    }

    /// Seed for the run's random generator.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-point copy budget `qbar`.
    pub fn qbar(&self) -> u64 {
        self.qbar
    }

    /// Test-only hook: report every leverage-score estimate as 1, which
    /// drives all retention probabilities to 1 and makes the sampler
    /// keep `qbar` copies of everything.
    #[cfg(test)]
    fn forcing_full_estimates(mut self) -> Self {
        self.force_full_estimates = true;
        self
    }
}

/// State after processing `step` points: the dictionary, the score
/// estimates that drove the last update, and the copy total.
#[derive(Debug, Clone)]
pub struct StepState {
    step: usize,
    dictionary: Dictionary,
    estimates: BTreeMap<usize, RlsEstimate>,
    copies_total: u64,
    /// Kernel entries among retained points, in dictionary entry order.
    gram: Array2<f64>,
}

impl StepState {
    /// The empty state before any point has arrived.
    pub fn initial(config: &SqueakConfig) -> Result<Self> {
        Ok(Self {
            step: 0,
            dictionary: Dictionary::new(config.qbar())?,
            estimates: BTreeMap::new(),
            copies_total: 0,
            gram: Array2::zeros((0, 0)),
        })
    }

    /// Number of points processed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    /// The current dictionary.
    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    /// Leverage-score estimates from the most recent update: one per
    /// index retained *before* the update, plus the point that arrived.
    pub fn estimates(&self) -> &BTreeMap<usize, RlsEstimate> {
        &self.estimates
    }

    /// Total retained copies `sum_j Q_j`.
    pub fn copies_total(&self) -> u64 {
        self.copies_total
    }
}

/// Kernel access for one streaming step: dictionary-internal entries
/// come from the cached block, entries against the current point from
/// the freshly evaluated column.
struct StreamAccess<'a> {
    indices: &'a [usize],
    gram: &'a Array2<f64>,
    cross: &'a [f64],
    diag: f64,
    new_index: usize,
}

impl StreamAccess<'_> {
    fn position(&self, index: usize) -> usize {
        self.indices
            .binary_search(&index)
            .expect("estimator queries only dictionary indices and the current point")
    }
}

impl KernelAccess for StreamAccess<'_> {
    fn entry(&self, i: usize, j: usize) -> f64 {
        match (i == self.new_index, j == self.new_index) {
            (true, true) => self.diag,
            (true, false) => self.cross[self.position(j)],
            (false, true) => self.cross[self.position(i)],
            (false, false) => self.gram[(self.position(i), self.position(j))],
        }
    }
}

/// Core update: estimate, re-weight, shrink, expand, refresh the cache.
///
/// `cross` holds the kernel values between the new point and each
/// dictionary entry, in entry order; `diag` is the new point's
/// self-similarity; `new_point` is stored with any retained copies.
fn advance<R: Rng + ?Sized>(
    state: &StepState,
    cross: &[f64],
    diag: f64,
    new_point: Array1<f64>,
    config: &SqueakConfig,
    rng: &mut R,
) -> Result<StepState> {
    let t = state.step;
    let dict = &state.dictionary;
    let indices: Vec<usize> = dict.entries().iter().map(|e| e.index).collect();
    debug_assert_eq!(cross.len(), indices.len());

    let access = StreamAccess { indices: &indices, gram: &state.gram, cross, diag, new_index: t };
    let estimator = RlsEstimator::new(dict, &access, t, config.rls())?;
    #[allow(unused_mut)]
    let mut estimates: BTreeMap<usize, RlsEstimate> =
        estimator.estimates().map(|e| (e.index, e)).collect();
    #[cfg(test)]
    if config.force_full_estimates {
        for e in estimates.values_mut() {
            e.value = 1.0;
        }
    }

    let mut new_probs = BTreeMap::new();
    for e in dict.entries() {
        new_probs.insert(e.index, probability_update(estimates[&e.index].value, e.probability));
    }
    let shrunk = dict.shrink(&new_probs, rng)?;
    // A point that has never been seen before was "kept" with
    // probability one, so its first retention probability is
    // probability_update(tau~, 1).
    let expanded = shrunk.expand(new_point, t, probability_update(estimates[&t].value, 1.0), rng)?;

    // Refresh the dictionary-internal kernel cache: survivors copy their
    // old entries, the new point contributes the evaluated column.
    let kept: Vec<usize> = expanded.entries().iter().map(|e| e.index).collect();
    let m = kept.len();
    let old_pos = |x: usize| {
        indices.binary_search(&x).expect("every surviving index was in the previous dictionary")
    };
    let mut gram = Array2::zeros((m, m));
    for a in 0..m {
        for b in 0..=a {
            let v = match (kept[a] == t, kept[b] == t) {
                (true, true) => diag,
                (true, false) => cross[old_pos(kept[b])],
                (false, true) => cross[old_pos(kept[a])],
                (false, false) => state.gram[(old_pos(kept[a]), old_pos(kept[b]))],
            };
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }

    let copies_total = expanded.total_copies();
    Ok(StepState { step: t + 1, dictionary: expanded, estimates, copies_total, gram })
}

/// Processes one arriving point given its full kernel column.
///
/// The column's index must equal `state.step()`. Only the entries
/// against retained indices (plus the diagonal) are read. Copies kept by
/// this path store an empty point payload — the column already carries
/// every kernel value a later step will ask for by index, so the payload
/// is only needed when the caller evaluates kernels lazily from a
/// dataset, as [`run_stream`] does.
pub fn process_point<R: Rng + ?Sized>(
    state: &StepState,
    column: &KernelColumn,
    config: &SqueakConfig,
    rng: &mut R,
) -> Result<StepState> {
    if column.index != state.step {
        return Err(Error::ContractViolation(format!(
            "column for stream position {} processed at step {}",
            column.index, state.step
        )));
    }
    if column.cross.len() != column.index {
        return Err(Error::ContractViolation(format!(
            "kernel column at position {} has {} cross entries",
            column.index,
            column.cross.len()
        )));
    }
    let cross: Vec<f64> =
        state.dictionary.entries().iter().map(|e| column.cross[e.index]).collect();
    advance(state, &cross, column.diag, Array1::zeros(0), config, rng)
}

/// Per-step progress report handed to the observer callback.
#[derive(Debug)]
pub struct StepProgress<'a> {
    /// Points processed so far (the step just completed).
    pub step: usize,
    /// Total retained copies after the step.
    pub copies_total: u64,
    /// Distinct retained indices after the step.
    pub distinct: usize,
    /// Sum of retention probabilities over the dictionary.
    pub prob_sum: f64,
    /// Fresh kernel evaluations this step (`distinct + 1` of the
    /// previous dictionary).
    pub kernel_evals: u64,
    /// Wall-clock time since the run started.
    pub elapsed: Duration,
    /// The index pairs evaluated this step: `(current, retained)` for
    /// each retained index plus `(current, current)`.
    pub pairs: &'a [(usize, usize)],
}

/// Runs the sampler over the whole dataset and returns every
/// intermediate state.
///
/// Kernel values are evaluated lazily — per step, one evaluation against
/// each retained point plus the diagonal — so the full kernel matrix is
/// never formed. Memory note: each state carries its dictionary and the
/// kernel block among retained points; to keep only selected states, use
/// [`run_stream_observed`] with a `keep` predicate.
pub fn run_stream(
    dataset: &Dataset,
    kernel: &KernelFunction,
    config: &SqueakConfig,
) -> Result<Vec<StepState>> {
    run_stream_observed(dataset, kernel, config, |_| true, |_| {})
}

/// [`run_stream`] with a state-retention predicate and a per-step
/// observer.
///
/// `keep` receives each completed step number (1 through `n`) and
/// decides whether that state is cloned into the result; `observer` is
/// invoked after every step regardless.
pub fn run_stream_observed(
    dataset: &Dataset,
    kernel: &KernelFunction,
    config: &SqueakConfig,
    mut keep: impl FnMut(usize) -> bool,
    mut observer: impl FnMut(&StepProgress),
) -> Result<Vec<StepState>> {
    if dataset.is_empty() {
        return Err(Error::InvalidParameter("the stream must contain at least one point".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
    let mut state = StepState::initial(config)?;
    let mut out = Vec::new();
    let mut cross = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();

    for t in 0..dataset.len() {
        let x = dataset.point(t);
        cross.clear();
        pairs.clear();
        for e in state.dictionary.entries() {
            cross.push(kernel.eval(x, e.point.view())?);
            pairs.push((t, e.index));
        }
        let diag = kernel.eval(x, x)?;
        pairs.push((t, t));

        state = advance(&state, &cross, diag, x.to_owned(), config, &mut rng)?;

        let prob_sum = state.dictionary.entries().iter().map(|e| e.probability).sum();
        observer(&StepProgress {
            step: state.step,
            copies_total: state.copies_total,
            distinct: state.dictionary.len(),
            prob_sum,
            kernel_evals: pairs.len() as u64,
            elapsed: start.elapsed(),
            pairs: &pairs,
        });
        if keep(state.step) {
            out.push(state.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    use crate::dataset::{blocks_effective_dimension, gaussian_expansion, orthogonal_blocks, Dataset};
    use crate::kernels::column;

    fn config(gamma: f64, epsilon: f64, delta: f64, n_hint: usize, seed: u64) -> SqueakConfig {
        SqueakConfig::new(RlsConfig::new(gamma, epsilon).unwrap(), delta, 1.0, n_hint, seed)
            .unwrap()
    }

    fn constant_dataset(n: usize, dim: usize, value: f64) -> Dataset {
        Dataset::new(
            Array2::from_elem((n, dim), value),
            ndarray::Array1::zeros(n),
            None,
            None,
        )
        .unwrap()
    }

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        gaussian_expansion(
            n,
            dim,
            4,
            &KernelFunction::gaussian(1.0).unwrap(),
            0.1,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn budget_formula_matches_hand_computation() {
        // c_q = 1, eps = 0.5 -> alpha = 3, alpha/eps^2 = 12;
        // ln(1024/0.1) = 9.2340...; ceil(110.809...) = 111.
        let cfg = config(1.0, 0.5, 0.1, 1024, 0);
        assert_eq!(cfg.qbar(), 111);
        // Tiny constant still yields a budget of at least one copy.
        let tiny =
            SqueakConfig::new(RlsConfig::new(1.0, 0.5).unwrap(), 0.1, 1e-6, 4, 0).unwrap();
        assert_eq!(tiny.qbar(), 1);
    }

    #[test]
    fn config_validation() {
        let rls = RlsConfig::new(1.0, 0.5).unwrap();
        assert!(SqueakConfig::new(rls.clone(), 0.0, 1.0, 10, 0).is_err());
        assert!(SqueakConfig::new(rls.clone(), 1.0, 1.0, 10, 0).is_err());
        assert!(SqueakConfig::new(rls.clone(), 0.1, 0.0, 10, 0).is_err());
        assert!(SqueakConfig::new(rls.clone(), 0.1, 1.0, 0, 0).is_err());
        // The formula diverges at eps = 0; an explicit budget works.
        let exact = RlsConfig::new(1.0, 0.0).unwrap();
        assert!(SqueakConfig::new(exact.clone(), 0.1, 1.0, 10, 0).is_err());
        let cfg = SqueakConfig::with_budget(exact, 0.1, 7, 0).unwrap();
        assert_eq!(cfg.qbar(), 7);
        assert!(SqueakConfig::with_budget(rls, 0.1, 0, 0).is_err());
    }

    #[test]
    fn first_point_probability_and_copies() {
        // Unit diagonal, gamma = 1, eps = 0: tau~ = 1 - 1/(1 + gamma)
        // = 0.5, so the first probability is exactly 0.5 and the copy
        // count is Binomial(qbar, 0.5).
        let ds = constant_dataset(1, 2, 0.3);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let qbar = 100u64;
        let mut total = 0.0;
        let runs = 400;
        for seed in 0..runs {
            let cfg =
                SqueakConfig::with_budget(RlsConfig::new(1.0, 0.0).unwrap(), 0.1, qbar, seed)
                    .unwrap();
            let states = run_stream(&ds, &kernel, &cfg).unwrap();
            assert_eq!(states.len(), 1);
            let s = &states[0];
            assert_abs_diff_eq!(s.estimates()[&0].value, 0.5, epsilon = 1e-12);
            if let Some(e) = s.dictionary().get(0) {
                assert_abs_diff_eq!(e.probability, 0.5, epsilon = 1e-12);
            }
            total += s.copies_total() as f64;
        }
        // Mean of Binomial(100, 1/2) is 50 with standard deviation 5;
        // three standard errors over 400 runs is 0.75.
        let mean = total / runs as f64;
        assert!((mean - 50.0).abs() <= 0.75, "mean copy count {mean}");
    }

    #[test]
    fn forced_full_estimates_keep_everything() {
        // With every estimate pinned to 1, probabilities stay at 1, all
        // shrink ratios are 1, and expansion adds qbar copies per point:
        // the dictionary degenerates to the whole prefix.
        let ds = random_dataset(10, 2, 5);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let qbar = 7u64;
        let cfg = SqueakConfig::with_budget(RlsConfig::new(1.0, 0.0).unwrap(), 0.1, qbar, 3)
            .unwrap()
            .forcing_full_estimates();
        let states = run_stream(&ds, &kernel, &cfg).unwrap();
        for (i, s) in states.iter().enumerate() {
            let t = i + 1;
            assert_eq!(s.copies_total(), t as u64 * qbar);
            assert_eq!(s.dictionary().len(), t);
            for e in s.dictionary().entries() {
                assert_eq!(e.probability, 1.0);
                assert_eq!(e.multiplicity, qbar);
            }
        }
    }

    #[test]
    fn duplicate_stream_keeps_bounded_copies() {
        // All points identical: the exact score at step t is
        // k/(k t + gamma) = 1/(t + 1), decaying fast enough that the
        // copy total stays within a small multiple of qbar.
        let n = 200;
        let ds = constant_dataset(n, 3, 1.25);
        let kernel = KernelFunction::gaussian(2.0).unwrap();
        for seed in 0..20 {
            let cfg = config(1.0, 0.5, 0.1, n, seed);
            let bound = 4 * cfg.qbar();
            let states = run_stream(&ds, &kernel, &cfg).unwrap();
            for s in &states {
                assert!(
                    s.copies_total() <= bound,
                    "seed {seed}: {} copies at step {} exceeds {bound}",
                    s.copies_total(),
                    s.step()
                );
            }
        }
    }

    #[test]
    fn single_point_stream() {
        let ds = constant_dataset(1, 1, 0.0);
        let kernel = KernelFunction::Linear;
        let cfg = config(1.0, 0.5, 0.1, 1, 0);
        let states = run_stream(&ds, &kernel, &cfg).unwrap();
        assert_eq!(states.len(), 1);
        for e in states[0].dictionary().entries() {
            assert_eq!(e.index, 0);
        }
    }

    #[test]
    fn identical_seeds_reproduce_bit_for_bit() {
        let ds = random_dataset(40, 2, 11);
        let kernel = KernelFunction::gaussian(0.8).unwrap();
        let cfg = config(1.0, 0.5, 0.1, 40, 17);
        let a = run_stream(&ds, &kernel, &cfg).unwrap();
        let b = run_stream(&ds, &kernel, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.dictionary(), y.dictionary());
            assert_eq!(x.estimates(), y.estimates());
            assert_eq!(x.copies_total(), y.copies_total());
        }
        // A keep predicate returns the same states, just fewer of them.
        let last =
            run_stream_observed(&ds, &kernel, &cfg, |s| s == 40, |_| {}).unwrap();
        assert_eq!(last.len(), 1);
        assert_eq!(last[0].dictionary(), a[39].dictionary());
    }

    #[test]
    fn column_driven_path_matches_lazy_path() {
        // Driving process_point with full kernel columns consumes the
        // same randomness and yields the same dictionaries (up to the
        // point payloads, which the column path does not store).
        let ds = random_dataset(12, 2, 23);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let cfg = config(1.0, 0.5, 0.1, 12, 9);
        let lazy = run_stream(&ds, &kernel, &cfg).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
        let mut state = StepState::initial(&cfg).unwrap();
        for t in 0..ds.len() {
            let col = column(&kernel, &ds, t).unwrap();
            state = process_point(&state, &col, &cfg, &mut rng).unwrap();
            let reference = &lazy[t];
            assert_eq!(state.dictionary().snapshot(), reference.dictionary().snapshot());
            assert_eq!(state.estimates(), reference.estimates());
        }
    }

    #[test]
    fn column_index_mismatch_is_rejected() {
        let ds = random_dataset(5, 2, 1);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let cfg = config(1.0, 0.5, 0.1, 5, 0);
        let state = StepState::initial(&cfg).unwrap();
        let col = column(&kernel, &ds, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            process_point(&state, &col, &cfg, &mut rng),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn empty_stream_is_rejected() {
        let ds = Dataset::new(Array2::zeros((0, 2)), ndarray::Array1::zeros(0), None, None)
            .unwrap();
        let kernel = KernelFunction::Linear;
        let cfg = config(1.0, 0.5, 0.1, 1, 0);
        assert!(run_stream(&ds, &kernel, &cfg).is_err());
    }

    #[test]
    fn probabilities_never_increase() {
        let ds = random_dataset(60, 2, 31);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let cfg = config(1.0, 0.5, 0.1, 60, 2);
        let states = run_stream(&ds, &kernel, &cfg).unwrap();
        for w in states.windows(2) {
            for e in w[1].dictionary().entries() {
                if let Some(prev) = w[0].dictionary().get(e.index) {
                    assert!(
                        e.probability <= prev.probability,
                        "probability of index {} rose from {} to {}",
                        e.index,
                        prev.probability,
                        e.probability
                    );
                }
            }
        }
        // Estimates cover exactly the previous dictionary plus the
        // arriving point.
        for (i, w) in states.windows(2).enumerate() {
            let mut expected: Vec<usize> =
                w[0].dictionary().entries().iter().map(|e| e.index).collect();
            expected.push(i + 1);
            let got: Vec<usize> = w[1].estimates().keys().copied().collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn kernel_access_is_single_pass() {
        // Every evaluated pair touches the current point, and the other
        // side is either retained or the point itself; the total is far
        // below the dense n(n+1)/2.
        let n = 80;
        let ds = random_dataset(n, 2, 41);
        let kernel = KernelFunction::gaussian(1.0).unwrap();
        let cfg = config(1.0, 0.5, 0.1, n, 4);
        let mut logs: Vec<Vec<(usize, usize)>> = Vec::new();
        let states = run_stream_observed(
            &ds,
            &kernel,
            &cfg,
            |_| true,
            |p| {
                assert_eq!(p.pairs.len() as u64, p.kernel_evals);
                logs.push(p.pairs.to_vec());
            },
        )
        .unwrap();
        let mut total = 0u64;
        for (t, pairs) in logs.iter().enumerate() {
            // The dictionary in force when point t arrived is the state
            // after step t (index t-1 here); the first point sees an
            // empty dictionary.
            let retained: Vec<usize> = if t == 0 {
                Vec::new()
            } else {
                states[t - 1].dictionary().entries().iter().map(|e| e.index).collect()
            };
            assert_eq!(pairs.len(), retained.len() + 1);
            for &(a, b) in pairs {
                assert_eq!(a, t, "evaluation must involve the current point");
                assert!(
                    b == t || retained.binary_search(&b).is_ok(),
                    "pair ({a}, {b}) touches a non-retained past point"
                );
            }
            total += pairs.len() as u64;
        }
        let dense = (n * (n + 1) / 2) as u64;
        assert!(total < dense, "evaluated {total} pairs, dense cost is {dense}");
    }

    #[test]
    fn blocks_dataset_respects_space_bound() {
        // Orthogonal blocks with closed-form effective dimension: the
        // copy total must stay within 8 * qbar * d_eff(t) at every step
        // in at least 95% of runs (the constant is test slack).
        let n = 120;
        let blocks = 6;
        let scale = 2.0;
        let gamma = 1.0;
        let ds = orthogonal_blocks(n, blocks, scale, 0.1, 77).unwrap();
        let kernel = KernelFunction::Linear;
        let runs = 50;
        let mut ok = 0u64;
        for seed in 0..runs {
            let cfg = config(gamma, 0.5, 0.1, n, seed);
            let states = run_stream(&ds, &kernel, &cfg).unwrap();
            let within = states.iter().all(|s| {
                let deff = blocks_effective_dimension(s.step(), blocks, scale, gamma);
                (s.copies_total() as f64) <= 8.0 * cfg.qbar() as f64 * deff
            });
            ok += u64::from(within);
        }
        assert!(ok * 20 >= runs * 19, "space bound held in only {ok}/{runs} runs");
    }
}

//! The weighted multiset of retained columns and its randomized updates.
//!
//! A [`Dictionary`] holds, per retained stream index `j`, a copy count
//! `Q_j`, the sampling probability `p_j` those copies were kept with, and
//! the point `x_j` itself (points are kept instead of kernel columns so
//! stored vectors do not grow with the stream). The two randomized
//! operations mirror the sampler's per-step update: [`Dictionary::shrink`]
//! binomially thins every entry down to its new probability, and
//! [`Dictionary::expand`] admits the arriving point with a fresh binomial
//! draw of up to `qbar` copies.
//!
//! Copies of index `j` conceptually carry selection weight
//! `1/sqrt(qbar * p_j)` each; the collapsed per-index aggregate
//! `w_j = Q_j / (qbar * p_j)` is what downstream solvers consume
//! ([`Dictionary::selection_weights`]).

use std::collections::BTreeMap;

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// One retained stream index with its copy count, probability, and point.
#[derive(Debug, Clone, PartialEq)]
pub struct DictEntry {
    /// Zero-based stream position of the retained point.
    pub index: usize,
    /// Copy count `Q_j`; entries are removed when it reaches zero.
    pub multiplicity: u64,
    /// Probability `p_j in (0, 1]` the copies were kept with.
    pub probability: f64,
    /// The stored point `x_j`.
    pub point: Array1<f64>,
}

impl DictEntry {
    /// Aggregate selection weight `Q_j / (qbar * p_j)` of this entry.
    pub fn weight(&self, qbar: u64) -> f64 {
        self.multiplicity as f64 / (qbar as f64 * self.probability)
    }
}

/// Weighted multiset of retained stream indices after `step` points.
///
/// Invariants: entry indices are strictly increasing and `< step`; every
/// entry has `multiplicity >= 1` and `probability in (0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    entries: Vec<DictEntry>,
    qbar: u64,
    step: usize,
}

/// Entry form used for JSON snapshots; points are reloaded from the
/// dataset by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub multiplicity: u64,
    pub probability: f64,
}

/// The per-step probability update `max{min{tau, prev}, prev/2}`.
///
/// Probabilities never increase, and never fall by more than half per
/// step — the latter keeps every thinning ratio in `[1/2, 1]`.
pub fn probability_update(tau_estimate: f64, prev_prob: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&tau_estimate));
    debug_assert!(prev_prob > 0.0 && prev_prob <= 1.0);
    tau_estimate.min(prev_prob).max(prev_prob / 2.0)
}

impl Dictionary {
    /// An empty dictionary at stream position zero.
    pub fn new(qbar: u64) -> Result<Self> {
        if qbar == 0 {
            return Err(Error::InvalidParameter("qbar must be >= 1".into()));
        }
        Ok(Self { entries: Vec::new(), qbar, step: 0 })
    }

    /// Number of points consumed so far; all entry indices are below this.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Per-point copy budget `qbar`.
    pub fn qbar(&self) -> u64 {
        self.qbar
    }

    /// Retained entries, in strictly increasing index order.
    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    /// Number of distinct retained indices.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total copy count `|I| = sum_j Q_j`.
    pub fn total_copies(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    /// The entry for stream index `index`, if retained.
    pub fn get(&self, index: usize) -> Option<&DictEntry> {
        self.entries
            .binary_search_by_key(&index, |e| e.index)
            .ok()
            .map(|pos| &self.entries[pos])
    }

    pub fn contains(&self, index: usize) -> bool {
        self.get(index).is_some()
    }

    /// Aggregate selection weights `w_j = Q_j / (qbar * p_j)` per distinct
    /// index — the diagonal of `S S^T` restricted to retained indices,
    /// where `S` carries `Q_j` physical columns of weight
    /// `1/sqrt(qbar * p_j)` each.
    pub fn selection_weights(&self) -> BTreeMap<usize, f64> {
        self.entries
            .iter()
            .map(|e| (e.index, e.weight(self.qbar)))
            .collect()
    }

    /// Binomially thins every entry from its stored probability down to
    /// `new_probs[j]`: the new multiplicity is `Binomial(Q_j, ratio)` with
    /// `ratio = new_probs[j] / p_j`, and entries hitting zero are dropped.
    ///
    /// Entries are processed in ascending index order and entries with
    /// `ratio = 1` consume no randomness, so runs are reproducible from
    /// the rng seed alone. A missing or out-of-range ratio is a contract
    /// violation: the caller must produce `new_probs` via
    /// [`probability_update`], which guarantees `ratio in [1/2, 1]`.
    pub fn shrink<R: Rng + ?Sized>(
        &self,
        new_probs: &BTreeMap<usize, f64>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let new_prob = *new_probs.get(&e.index).ok_or_else(|| {
                Error::ContractViolation(format!(
                    "shrink: no updated probability for retained index {}",
                    e.index
                ))
            })?;
            let ratio = new_prob / e.probability;
            if !(0.0..=1.0).contains(&ratio) {
                return Err(Error::ContractViolation(format!(
                    "shrink: ratio {ratio} for index {} is outside [0, 1]",
                    e.index
                )));
            }
            let multiplicity = if ratio == 1.0 {
                e.multiplicity
            } else {
                Binomial::new(e.multiplicity, ratio)
                    .expect("ratio checked to lie in [0, 1]")
                    .sample(rng)
            };
            if multiplicity > 0 {
                entries.push(DictEntry {
                    index: e.index,
                    multiplicity,
                    probability: new_prob,
                    point: e.point.clone(),
                });
            }
        }
        Ok(Self { entries, qbar: self.qbar, step: self.step })
    }

    /// Admits the arriving point with `Binomial(qbar, prob)` copies and
    /// advances the stream position. The entry is appended only when the
    /// draw is positive; the position advances either way.
    pub fn expand<R: Rng + ?Sized>(
        &self,
        new_point: Array1<f64>,
        new_index: usize,
        prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if new_index != self.step {
            return Err(Error::ContractViolation(format!(
                "expand: new index {} does not follow step {}",
                new_index, self.step
            )));
        }
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "expand probability must lie in (0, 1], got {prob}"
            )));
        }
        let multiplicity = Binomial::new(self.qbar, prob)
            .expect("probability checked to lie in (0, 1]")
            .sample(rng);
        let mut entries = self.entries.clone();
        if multiplicity > 0 {
            entries.push(DictEntry {
                index: new_index,
                multiplicity,
                probability: prob,
                point: new_point,
            });
        }
        Ok(Self { entries, qbar: self.qbar, step: self.step + 1 })
    }

    /// Snapshot of (index, multiplicity, probability) triples for
    /// serialization; points are reloaded from the dataset on restore.
    pub fn snapshot(&self) -> Vec<SnapshotEntry> {
        self.entries
            .iter()
            .map(|e| SnapshotEntry {
                index: e.index,
                multiplicity: e.multiplicity,
                probability: e.probability,
            })
            .collect()
    }

    /// The snapshot as a JSON array.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.snapshot())
            .map_err(|e| Error::InvalidParameter(format!("snapshot serialization: {e}")))
    }

    /// Rebuilds a dictionary from a snapshot, reloading points from the
    /// dataset by index.
    pub fn from_snapshot(
        snapshot: &[SnapshotEntry],
        qbar: u64,
        step: usize,
        dataset: &Dataset,
    ) -> Result<Self> {
        let entries = snapshot
            .iter()
            .map(|s| {
                if s.index >= dataset.len() {
                    return Err(Error::IndexOutOfRange { index: s.index, limit: dataset.len() });
                }
                Ok(DictEntry {
                    index: s.index,
                    multiplicity: s.multiplicity,
                    probability: s.probability,
                    point: dataset.point(s.index).to_owned(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(entries, qbar, step)
    }

    /// Parses [`to_json`](Self::to_json) output back into a dictionary.
    pub fn from_json(json: &str, qbar: u64, step: usize, dataset: &Dataset) -> Result<Self> {
        let snapshot: Vec<SnapshotEntry> = serde_json::from_str(json)
            .map_err(|e| Error::InvalidParameter(format!("snapshot parse: {e}")))?;
        Self::from_snapshot(&snapshot, qbar, step, dataset)
    }

    /// Constructor from raw entries (baselines, snapshot restore, tests);
    /// validates every dictionary invariant.
    pub fn from_entries(entries: Vec<DictEntry>, qbar: u64, step: usize) -> Result<Self> {
        if qbar == 0 {
            return Err(Error::InvalidParameter("qbar must be >= 1".into()));
        }
        let mut prev: Option<usize> = None;
        for e in &entries {
            if e.index >= step {
                return Err(Error::IndexOutOfRange { index: e.index, limit: step });
            }
            if prev.is_some_and(|p| p >= e.index) {
                return Err(Error::InvalidParameter(
                    "entry indices must be strictly increasing".into(),
                ));
            }
            if e.multiplicity == 0 {
                return Err(Error::InvalidParameter(format!(
                    "entry {} has zero multiplicity",
                    e.index
                )));
            }
            if !(e.probability > 0.0 && e.probability <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "entry {} has probability {} outside (0, 1]",
                    e.index, e.probability
                )));
            }
            prev = Some(e.index);
        }
        Ok(Self { entries, qbar, step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(index: usize, multiplicity: u64, probability: f64) -> DictEntry {
        DictEntry { index, multiplicity, probability, point: array![index as f64] }
    }

    fn dict(entries: Vec<DictEntry>, qbar: u64, step: usize) -> Dictionary {
        Dictionary::from_entries(entries, qbar, step).unwrap()
    }

    #[test]
    fn probability_update_mid_range() {
        assert_eq!(probability_update(0.3, 0.5), 0.3);
    }

    #[test]
    fn probability_update_halving_clamp() {
        assert_eq!(probability_update(0.05, 0.5), 0.25);
    }

    #[test]
    fn probability_update_never_increases() {
        assert_eq!(probability_update(0.9, 0.5), 0.5);
    }

    #[test]
    fn shrink_with_unit_ratios_is_identity() {
        let d = dict(vec![entry(0, 3, 0.5), entry(2, 7, 0.25)], 8, 3);
        let probs: BTreeMap<usize, f64> = [(0, 0.5), (2, 0.25)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let shrunk = d.shrink(&probs, &mut rng).unwrap();
        assert_eq!(shrunk, d);
    }

    #[test]
    fn shrink_rejects_increased_probability() {
        let d = dict(vec![entry(0, 3, 0.5)], 8, 1);
        let probs: BTreeMap<usize, f64> = [(0, 0.6)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            d.shrink(&probs, &mut rng).unwrap_err(),
            Error::ContractViolation(_)
        ));
    }

    #[test]
    fn shrink_rejects_missing_probability() {
        let d = dict(vec![entry(0, 3, 0.5)], 8, 1);
        let probs = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            d.shrink(&probs, &mut rng).unwrap_err(),
            Error::ContractViolation(_)
        ));
    }

    #[test]
    fn shrink_binomial_mean_matches_ratio() {
        // Q = 10_000, ratio = 0.5 over 200 seeds: the sample mean must sit
        // within 3 standard errors of 5_000 (stderr = sqrt(10_000 * 0.25 / 200)).
        let d = dict(vec![entry(0, 10_000, 1.0)], 10_000, 1);
        let probs: BTreeMap<usize, f64> = [(0, 0.5)].into();
        let mut sum = 0.0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shrunk = d.shrink(&probs, &mut rng).unwrap();
            sum += shrunk.total_copies() as f64;
        }
        let mean = sum / 200.0;
        let stderr = (10_000.0 * 0.25 / 200.0_f64).sqrt();
        assert!((mean - 5_000.0).abs() <= 3.0 * stderr, "mean {mean}");
    }

    #[test]
    fn shrink_never_increases_multiplicity_and_drops_zeros() {
        let d = dict(vec![entry(0, 5, 1.0), entry(1, 1, 1.0)], 8, 2);
        let probs: BTreeMap<usize, f64> = [(0, 0.5), (1, 0.5)].into();
        for seed in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shrunk = d.shrink(&probs, &mut rng).unwrap();
            for e in shrunk.entries() {
                assert!(e.multiplicity >= 1);
                let before = d.get(e.index).unwrap();
                assert!(e.multiplicity <= before.multiplicity);
                assert_eq!(e.probability, 0.5);
            }
        }
    }

    #[test]
    fn expand_with_certainty_gives_full_budget() {
        let d = Dictionary::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = d.expand(array![1.0], 0, 1.0, &mut rng).unwrap();
        assert_eq!(d.step(), 1);
        assert_eq!(d.total_copies(), 6);
        assert_eq!(d.get(0).unwrap().probability, 1.0);
    }

    #[test]
    fn expand_rejects_wrong_index() {
        let d = Dictionary::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            d.expand(array![1.0], 3, 1.0, &mut rng).unwrap_err(),
            Error::ContractViolation(_)
        ));
    }

    #[test]
    fn expand_advances_step_even_when_entry_absent() {
        // With prob = 1e-12 the draw is zero with overwhelming probability,
        // but the stream position must advance regardless.
        let d = Dictionary::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = d.expand(array![1.0], 0, 1e-12, &mut rng).unwrap();
        assert_eq!(d.step(), 1);
        assert!(d.is_empty());
    }

    #[test]
    fn expand_mean_matches_qbar_times_prob() {
        // qbar = 1, prob = 0.5: presence frequency over 10^4 seeds within
        // 3 standard errors of 1/2.
        let d = Dictionary::new(1).unwrap();
        let mut present = 0u32;
        for seed in 0..10_000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = d.expand(array![0.0], 0, 0.5, &mut rng).unwrap();
            present += u32::from(!e.is_empty());
        }
        let freq = f64::from(present) / 10_000.0;
        let stderr = (0.25 / 10_000.0_f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * stderr, "freq {freq}");
    }

    #[test]
    fn expand_small_prob_mean_over_many_seeds() {
        // qbar = 16, prob = 0.01: mean copies within 3 stderr of 0.16.
        let d = Dictionary::new(16).unwrap();
        let mut sum = 0.0;
        let n = 10_000u64;
        for seed in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = d.expand(array![0.0], 0, 0.01, &mut rng).unwrap();
            sum += e.total_copies() as f64;
        }
        let mean = sum / n as f64;
        let var = 16.0 * 0.01 * 0.99;
        let stderr = (var / n as f64).sqrt();
        assert!((mean - 0.16).abs() <= 3.0 * stderr, "mean {mean}");
    }

    #[test]
    fn selection_weight_arithmetic() {
        assert_eq!(entry(0, 8, 1.0).weight(8), 1.0);
        assert_eq!(entry(0, 1, 0.25).weight(4), 1.0);
        assert_eq!(entry(0, 3, 0.5).weight(4), 1.5);
    }

    #[test]
    fn collapsed_weights_match_literal_selection_matrix() {
        // Build the literal selection matrix with Q_j identical columns of
        // weight 1/sqrt(qbar * p_j) and compare diag(S S^T) against the
        // collapsed aggregates.
        let qbar = 4u64;
        let d = dict(vec![entry(0, 3, 0.75), entry(1, 1, 0.25)], qbar, 2);
        let copies: Vec<(usize, f64)> = d
            .entries()
            .iter()
            .flat_map(|e| {
                std::iter::repeat((e.index, 1.0 / (qbar as f64 * e.probability).sqrt()))
                    .take(e.multiplicity as usize)
            })
            .collect();
        let t = 2;
        let mut s = Array2::<f64>::zeros((t, copies.len()));
        for (c, (idx, w)) in copies.iter().enumerate() {
            s[(*idx, c)] = *w;
        }
        let ss_t = s.dot(&s.t());
        let weights = d.selection_weights();
        for (idx, w) in &weights {
            assert!((ss_t[(*idx, *idx)] - w).abs() < 1e-12);
        }
        // Off-diagonals vanish: distinct indices hit distinct rows.
        assert_eq!(ss_t[(0, 1)], 0.0);
    }

    #[test]
    fn shrink_then_expand_is_reproducible() {
        let d = dict(vec![entry(0, 5, 1.0), entry(1, 4, 0.5)], 8, 2);
        let probs: BTreeMap<usize, f64> = [(0, 0.5), (1, 0.3)].into();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = d.shrink(&probs, &mut rng).unwrap();
            s.expand(array![2.0], 2, 0.7, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_eq!(run(10), run(10));
    }

    #[test]
    fn snapshot_json_round_trip() {
        let points = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 2.0]).unwrap();
        let ds = Dataset::new(points, ndarray::Array1::zeros(3), None, None).unwrap();
        let d = dict(
            vec![
                DictEntry { index: 0, multiplicity: 2, probability: 0.5, point: array![0.0] },
                DictEntry { index: 2, multiplicity: 1, probability: 0.25, point: array![2.0] },
            ],
            4,
            3,
        );
        let json = d.to_json().unwrap();
        assert!(json.contains("\"index\":0"));
        let back = Dictionary::from_json(&json, 4, 3, &ds).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn snapshot_rejects_invalid_entries() {
        let points = Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap();
        let ds = Dataset::new(points, ndarray::Array1::zeros(2), None, None).unwrap();
        // Index beyond step.
        assert!(Dictionary::from_json(
            r#"[{"index":5,"multiplicity":1,"probability":0.5}]"#,
            4,
            2,
            &ds
        )
        .is_err());
        // Zero multiplicity.
        assert!(Dictionary::from_json(
            r#"[{"index":0,"multiplicity":0,"probability":0.5}]"#,
            4,
            2,
            &ds
        )
        .is_err());
        // Probability outside (0, 1].
        assert!(Dictionary::from_json(
            r#"[{"index":0,"multiplicity":1,"probability":0.0}]"#,
            4,
            2,
            &ds
        )
        .is_err());
        // Out-of-order indices.
        assert!(Dictionary::from_json(
            r#"[{"index":1,"multiplicity":1,"probability":0.5},
                {"index":0,"multiplicity":1,"probability":0.5}]"#,
            4,
            2,
            &ds
        )
        .is_err());
    }
}

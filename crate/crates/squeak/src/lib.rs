//! Streaming kernel-matrix sketching via ridge-leverage-score sampling.
//!
//! This crate builds a Nystrom approximation of a kernel matrix in a
//! single pass over the data: each arriving point is scored by an
//! estimate of its ridge leverage, existing dictionary entries are
//! down-sampled as their scores shrink, and the retained multiset of
//! columns is enough to reconstruct the matrix — and to solve kernel
//! ridge regression — to within a `gamma`-dependent error.
//!
//! Module map:
//! - [`kernels`]: kernel families, incremental column construction.
//! - [`dataset`]: sample streams, CSV interchange, synthetic generators.
//! - [`rls`]: exact ridge leverage scores and the dictionary-based
//!   estimator.
//! - [`dictionary`]: the weighted multiset of retained columns and its
//!   shrink/expand resampling steps.
//! - [`nystrom`]: sketch materialization, regression solvers, and the
//!   approximation/risk checks.
//! - [`baselines`]: uniform, exhaustive, and oracle samplers for
//!   comparison.
//! - [`streaming`]: the single-pass driver tying the above together.

pub mod baselines;
pub mod book;
pub mod dataset;
pub mod dictionary;
pub mod error;
pub mod kernels;
pub mod nystrom;
pub mod rls;
pub mod streaming;

pub use error::{Error, Result};

//! The user guide, embedded so its examples run as doc-tests.
//!
//! The rendered guide lives in `book/` at the repository root (an
//! mdbook project); each chapter is included here as the documentation
//! of an empty module, so `cargo test --doc` compiles and runs every
//! code block in the guide. One module per chapter keeps doc-test
//! failures attributable to the chapter they came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}

#[doc = include_str!("../../../book/src/leverage-scores.md")]
pub mod leverage_scores {}

#[doc = include_str!("../../../book/src/dictionaries.md")]
pub mod dictionaries {}

#[doc = include_str!("../../../book/src/streaming.md")]
pub mod streaming {}

#[doc = include_str!("../../../book/src/nystrom.md")]
pub mod nystrom {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}

//! Planning and audit toolkit for paired precision-comparison benchmarks.
//!
//! * [`stats`]: quantiles, MDE bounds, sample sizes, Wilson intervals, paired tests.
//! * [`audit`]: per-example record ingestion and per-cell diagnostics.
//! * [`prereg`]: pre-registration documents and the disagreement-rate revision rule.
//! * [`mc`]: Monte Carlo validation of the MDE bound and split-SD sampling.
//! * [`report`]: audit reports and their text/markdown/machine renderings.
//! * [`cli`]: the `pairmde` command-line surface.

pub mod audit;
pub mod cli;
pub mod error;
pub mod mc;
pub mod prereg;
pub mod report;
pub mod stats;

pub use error::{Error, Result};

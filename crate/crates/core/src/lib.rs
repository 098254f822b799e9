//! Cardinality-constrained semi-supervised support vector machines.
//!
//! The classifier is trained on labeled points while the number of unlabeled
//! points placed on the positive side is pushed towards a known total. The
//! exact problem is a big-M mixed-integer QP ([`models`], [`bb`]); the
//! re-clustering heuristics in [`rcm`] and the fixing scheme in [`wircm`]
//! make it tractable for larger samples.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bb;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod models;
pub mod pipeline;
pub mod qp;
pub mod rcm;
pub mod wircm;

pub use error::{Error, Result};

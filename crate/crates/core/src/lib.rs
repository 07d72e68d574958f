//! Work-order prediction for packaging machines, audited in streaming
//! fashion by unsupervised anomaly detectors.
//!
//! The pipeline: alarm telemetry ([`telemetry`], or [`synth`] for synthetic
//! fleets) is filtered into features ([`preprocess`]), a bagged decision
//! forest ([`forest`]) turns each day into a work-order probability, and
//! the probability stream of every machine is re-scored by a one-class SVM,
//! an MCD detector and their vote ([`detectors`], [`audit`]). [`evaluate`]
//! compares the four decision rules per machine.

// `!(x > 0.0)` is used on purpose so NaN fails validation; indexed loops
// mirror the linear-algebra notation in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod detectors;
pub mod evaluate;
pub mod forest;
pub mod pipeline;
pub mod preprocess;
pub mod roc;
pub mod synth;
pub mod telemetry;

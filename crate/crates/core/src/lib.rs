//! Inference of a private binary user attribute from solicited item ratings.
//!
//! The pipeline has three stages. `dataset` ingests rating data with
//! per-user binary labels. `mf` fits a matrix-factorization model whose
//! per-item biases are conditioned on the label, so the bias gap carries
//! the attribute signal. `classifier` turns a set of answered ratings
//! into a posterior over the label, and `selection` picks the next item
//! to ask by minimizing the exact expected misclassification risk, with
//! an incremental fast path for long sessions. `eval` replays recorded
//! ratings as simulated interview sessions and reports AUC/accuracy/RMSE
//! curves; the `agenda-infer` binary drives everything from a flat
//! key-value config.

pub mod classifier;
pub mod dataset;
pub mod eval;
pub mod linalg;
pub mod math;
pub mod mf;
pub mod selection;

//! Hybrid recommender toolkit: probabilistic matrix factorization whose
//! item vectors are regularized toward a recurrent-convolutional
//! encoding of per-item caption documents, with the captions themselves
//! produced by a small LSTM decoder over precomputed image features.
//!
//! Module map:
//! - [`numerics`] — dense f64 kernels, SPD solve, stable activations
//! - [`corpus`] — ratings/document/feature ingestion, vocabulary, splits
//! - [`pmf`] — factorization loss, closed-form sweeps, prediction
//! - [`rcnn`] — document encoder forward/backward
//! - [`nic`] — LSTM caption decoder: likelihood, BPTT, training, decoding
//! - [`trainer`] — joint MAP optimization tying the pieces together
//! - [`eval`] — RMSE and corpus BLEU
//! - [`checkpoint`] — header + blob model files
//! - [`optim`] — shared RMSProp over named parameter groups

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod nic;
pub mod numerics;
pub mod optim;
pub mod pmf;
pub mod rcnn;
pub mod trainer;

pub use error::{Error, Result};

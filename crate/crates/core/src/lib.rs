//! Semi-supervised classification of clinical-style text reports.
//!
//! The pipeline: pretrain a bidirectional LSTM language model on unlabeled
//! report text ([`langmodel`]), pool its hidden states into fixed-size
//! document encodings, and fine-tune small classifier heads on scarce labels
//! ([`finetune`]) — alongside a ladder of TFIDF baselines ([`baselines`]) and
//! a rank-based AUROC/F1 evaluation layer ([`metrics`]).
//!
//! Everything trains through [`tensor`], a minimal reverse-mode autodiff
//! engine over dense f64 tensors.

pub mod baselines;
pub mod container;
pub mod corpus;
pub mod finetune;
pub mod gradcheck;
pub mod langmodel;
pub mod metrics;
pub mod tensor;
pub mod vectorize;

pub use tensor::{Optimizer, Tensor};

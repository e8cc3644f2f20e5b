//! Subcommand implementations.

pub mod baseline;
pub mod encode;
pub mod project;
pub mod synth;
pub mod train_clf;
pub mod train_lm;

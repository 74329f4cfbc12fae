//! Dynamic bad pair mining for time-series contrastive learning.
//!
//! The crate trains a small convolutional encoder with a per-pair InfoNCE
//! objective, records every pair's loss in a memory table, flags pairs whose
//! historical mean loss sits far below (noisy) or far above (faulty) the
//! population, and down-weights them through a transformation function.
//! Synthetic data with planted ground truth makes every claim checkable.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;
pub mod encoder;
pub mod seeding;
pub mod contrastive;
pub mod mining;
pub mod datagen;
pub mod experiment;
pub mod cli;

//! Robust-fair contrastive training toolkit.
//!
//! Implements a desk-scale image-text contrastive pipeline: symmetric
//! cross-entropy loss over batch similarity matrices, dynamic bad-pair
//! mining that downweights noisy or faulty batches from their loss
//! history, a Sinkhorn-distance fairness regularizer over protected-group
//! similarity distributions, and a fairness evaluation suite (AUC,
//! group-wise AUC, ES-AUC, DPD, DEOdds). Synthetic paired-embedding
//! datasets with controllable group bias and injected faulty pairs stand
//! in for real image-text corpora.

pub mod cli;
pub mod contrastive;
pub mod dataset;
pub mod dbpm;
pub mod encoder;
pub mod error;
pub mod fair_ot;
pub mod metrics;
pub mod numkit;
pub mod trainer;

pub use error::{Error, Result};

//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("row {row} is degenerate (norm {norm:.3e} below 1e-30)")]
    DegenerateRow { row: usize, norm: f64 },

    #[error("{what}: empty input")]
    EmptyInput { what: &'static str },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("swap corruption needs at least 2 chosen samples, got {chosen}")]
    CorruptionInfeasible { chosen: usize },

    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: schema error: {msg}")]
    Schema { line: usize, msg: String },

    #[error("line {line}: duplicate sample id {id:?}")]
    DuplicateId { id: String, line: usize },

    #[error("cannot build a batch plan: {n_samples} samples with batch size {batch_size}")]
    InfeasiblePlan { n_samples: usize, batch_size: usize },

    #[error("loss already recorded for batch {batch_id}, epoch {epoch}")]
    DuplicateRecord { batch_id: usize, epoch: u32 },

    #[error("no loss history before epoch {epoch} for batch {batch_id}")]
    NoHistory { batch_id: usize, epoch: u32 },

    #[error("loss history for batch {batch_id} is missing epoch {missing_epoch}")]
    IncompleteHistory { batch_id: usize, missing_epoch: u32 },

    #[error("batch too small for a similarity matrix: {size} < 2")]
    BatchTooSmall { size: usize },

    #[error("non-finite gradient in parameter block {block}")]
    DivergedGradient { block: &'static str },

    #[error("training diverged at epoch {epoch}, batch {batch_id}; last good checkpoint: {last_good}")]
    TrainingDiverged {
        epoch: u32,
        batch_id: usize,
        last_good: String,
    },

    #[error("AUC undefined: {n_pos} positives, {n_neg} negatives")]
    UndefinedAuc { n_pos: usize, n_neg: usize },

    #[error("group {gamma} has no members in this batch")]
    EmptyGroup { gamma: u32 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("cannot fit prototype: no samples with label {label}")]
    Prototype { label: u8 },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("corrupt or truncated file: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI contract: 2 = usage/config, 3 = runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Schema { .. }
            | Error::DuplicateId { .. }
            | Error::InfeasiblePlan { .. }
            | Error::VersionMismatch { .. } => 2,
            _ => 3,
        }
    }
}

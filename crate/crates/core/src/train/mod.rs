//! Training of per-class search models.

pub mod adam;
pub mod fit;
pub mod loss;
pub mod preprocess;

pub use adam::{AdamConfig, AdamState};
pub use fit::{fit, EpochRecord, FitOutcome, TrainConfig, TrainLog};
pub use loss::{huber, sequence_loss};
pub use preprocess::{compute_norm_stats, denormalize_targets, normalize_targets, preprocess_histories};

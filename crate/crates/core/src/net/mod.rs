//! The recurrent search network.

pub mod checkpoint;
pub mod lstm;
pub mod params;

pub use lstm::{backward, forward_step, sample_masks, unroll, Feed, RecurrentState, StepMasks, UnrollCache, Unrolled};
pub use params::{init_params, NormStats, SearchModelParams, Weights};

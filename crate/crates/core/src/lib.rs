//! Learned temporal search for action localization.

pub mod baselines;
pub mod config;
pub mod error;
pub mod eval;
pub mod inference;
pub mod net;
pub mod pipeline;
pub mod seed;
pub mod temporal;
pub mod train;
pub mod world;

pub use error::{Error, Result};

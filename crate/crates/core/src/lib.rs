//! Multitarget tracking benchmark: JPDA, track-oriented MHT and particle-based
//! belief propagation over a shared probabilistic system model, together with
//! the scenarios and metrics used to expose track coalescence and repulsion.

pub mod association;
pub mod bp;
pub mod error;
pub mod harness;
pub mod jpda;
pub mod metrics;
pub mod mht;
pub mod models;
pub mod rng;
pub mod tracker;

pub use error::{Result, TrackError};

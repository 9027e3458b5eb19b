//! Embodied communication over a sensing channel: a base-station array
//! decodes messages from the position of a scatterer on a remote agent
//! plane.
//!
//! The crate covers the array and scene model, the Bhattacharyya
//! reliability field, lattice codebooks with exact verification, converse
//! bounds, and a Monte Carlo simulator of the ML decoder.
//!
//! With the default `parallel` feature, embarrassingly parallel loops run on
//! rayon; without it the same code runs sequentially with identical results.

pub mod array_model;
pub mod bounds;
pub mod channel_sim;
pub mod codebook;
pub mod csvfmt;
pub mod error;
pub mod lambert;
pub mod par;
pub mod reliability_field;

pub use error::{Error, Result};

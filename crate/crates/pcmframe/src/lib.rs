//! Prompt-based cross-modal embedding projection and a dense projection
//! network from image-embedding space to generator-latent space, exercised
//! against a frozen differentiable toy world.

// `!(x >= lo)` style range checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod c2s;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod nn;
pub mod persist;
pub mod prompt;
pub mod training;
pub mod world;

pub use error::{Error, Result};

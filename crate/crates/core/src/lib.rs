pub mod artifact;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod fixtures;
pub mod gradcheck;
pub mod linear;
pub mod pipeline;
pub mod tree;

pub use error::{Error, Result};

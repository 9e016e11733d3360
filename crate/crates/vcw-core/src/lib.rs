//! Visual-context-window extension for rotary position embeddings,
//! progressive pooling of video-frame embeddings, and the desk-scale
//! evaluation machinery around them.

pub mod budget;
pub mod decoder;
pub mod error;
pub mod extension;
pub mod pooling;
pub mod rope;

pub use error::{Error, Result};

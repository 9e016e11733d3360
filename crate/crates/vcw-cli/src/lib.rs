//! Library surface of the `vcw` binary: command implementations, binary file
//! formats, and run manifests. Exposed so integration tests can build inputs
//! and parse outputs with the same code paths the binary uses.

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;

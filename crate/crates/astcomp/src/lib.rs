//! File formats, checkpoints and command implementations on top of
//! `astcomp-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod input;
pub mod manifest;

pub use error::{Error, Result};

//! Core of a multi-task, self-attentional AST code-completion model.
//!
//! The crate is `no_std` (with `alloc`): it holds the tree processing, the
//! vocabularies, a small reverse-mode autodiff tape, the segment-recurrent
//! encoder with its path-to-root encoder and task heads, the training loop
//! and the evaluation statistics. File formats, the CLI and everything else
//! that touches the OS live in the `astcomp` crate.

#![no_std]

extern crate alloc;

pub mod autograd;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use tensor::Matrix;

//! fei3d: expression classifiers and valence-arousal regressors trained on
//! 3D face-parameter vectors, fused with externally produced 2D-model
//! predictions, and evaluated with the full classification/regression
//! metric battery.
//!
//! The crate is self-contained: dense f64 matrices, a fixed cross-platform
//! PRNG, hand-written backprop for the fixed layer vocabulary, an adaptive
//! optimizer with decoupled weight decay, a triangular cyclic learning-rate
//! schedule, and binary/CSV data formats. The `fei3d` binary exposes the
//! full pipeline as subcommands.

mod bytes;
pub mod cli;
pub mod data;
pub mod error;
pub mod fusion;
pub mod losses;
pub mod metrics;
pub mod morphviz;
pub mod nn;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};

//! Label-noised trimmed SGD for image classification, from scratch.
//!
//! The training step injects uniform label noise into every mini-batch,
//! ranks the examples by their loss, drops the extremes from both ends, and
//! updates on the mean gradient of what survives. The crate provides:
//!
//! - [`nn`]: dense/conv/pool/ReLU forward-backward primitives with
//!   per-example softmax cross-entropy;
//! - [`model`]: the NN-2, NN-3 and LeNet stacks with flat parameter views
//!   and binary checkpoints;
//! - [`data`]: IDX parsing, normalization and seeded mini-batching;
//! - [`regularize`]: the label-noise and trimming operators, their
//!   schedules, and loss-distribution histograms;
//! - [`optimize`]: SGD/RMSprop/Adam, sigmoid learning-rate annealing, and
//!   the noised/trimmed training step;
//! - [`harness`]: seeded multi-trial experiments, metrics, CSV/JSON output;
//! - [`synth`]: deterministic stand-in datasets in IDX format for offline
//!   runs.
//!
//! Everything is double precision and deterministic for a fixed seed.

pub mod array;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod optimize;
pub mod regularize;
pub mod rng;
pub mod synth;

pub use array::RealArray;
pub use error::{Error, Result};
pub use rng::Rng;

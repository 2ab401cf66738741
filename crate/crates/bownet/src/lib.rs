//! Self-supervised visual representation learning by predicting bags of
//! visual words, implemented from scratch on the CPU.
//!
//! The pipeline: bootstrap a convolutional feature extractor with 90-degree
//! rotation prediction, quantize its feature maps into discrete visual words
//! with a k-means vocabulary, reduce word maps to L1-normalized bag-of-words
//! targets, and train a second encoder to predict those targets from
//! aggressively perturbed images. Representation quality is measured with a
//! linear probe and episodic few-shot evaluation on frozen features.
//!
//! See the `book/` directory for a guided tour; its code snippets run as
//! doc-tests and are kept in sync with the crate.

pub mod augment;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod numerics;

pub use error::{Error, Result};

//! Crowd behavior classification with emotion attributes as a mid-level
//! representation.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: label taxonomy, clip records, manifest I/O and a synthetic
//!   generator in which emotion mediates between behavior and appearance.
//! - [`bow`]: k-means codebooks and bag-of-visual-words histograms.
//! - [`svm`]: linear SVMs (binary and one-vs-all) trained with an exact SMO
//!   solver.
//! - [`emotion`]: the emotion classifier bank, emotion-score representation,
//!   the behavior classifier on top of it and the emotion-aware baseline.
//! - [`latent`]: the latent-emotion model with pairwise emotion terms,
//!   exact inference over binary configurations and coordinate-descent
//!   training.
//! - [`eval`]: leave-one-sequence-out experiments, accuracy, confusion
//!   matrices and inter-annotator agreement.

pub mod bow;
pub mod dataset;
pub mod emotion;
pub mod error;
pub mod eval;
pub mod latent;
mod linalg;
pub mod svm;

pub use error::{Error, Result};

//! Learning binary classifiers from unlabeled pairs annotated with similarity
//! confidence: the probability that the two points of a pair share a class.
//!
//! The crate is organized bottom-up:
//!
//! - [`datagen`] draws labeled Gaussian data, forms pairs and attaches exact or
//!   noisy confidences.
//! - [`losses`] and [`risk`] define the margin losses and the pairwise risk
//!   estimators (unbiased, corrected, one-sided) with their score gradients.
//! - [`model`] and [`optim`] provide linear and ReLU-MLP predictors with exact
//!   backpropagation, and Adam with a step learning-rate schedule.
//! - [`prior`] recovers the class prior from the mean confidence.
//! - [`trainer`] runs empirical risk minimization with validation-based model
//!   selection.
//! - [`dataset_io`] reads IDX image files and turns multiclass labels into
//!   confidence-annotated pairs.
//! - [`experiments`] contains the reproducible experiment protocols driven by
//!   the `sconf` command-line tool.

pub mod datagen;
pub mod dataset_io;
pub mod error;
pub mod experiments;
pub mod keyvalue;
pub mod losses;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod prior;
pub mod risk;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};

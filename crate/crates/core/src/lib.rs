//! Core algorithms for passive authentication from mobile behavioral
//! biometrics.
//!
//! The crate covers the full verification pipeline on in-memory data:
//!
//! - [`data`]: session records, sampling-frequency estimation, subject
//!   validation and train/validation/test splits.
//! - [`preprocess`]: per-modality feature extraction (down-sampling,
//!   z-normalization, derivatives, DFT magnitude, screen normalization,
//!   keystroke timing features).
//! - [`window`]: fixed-length window extraction with zero padding, both
//!   random (training) and overlapped (enrollment).
//! - [`nn`]: a two-layer recurrent encoder trained with triplet loss,
//!   including exact backpropagation through time, Adam updates, and a
//!   finite-difference gradient checker.
//! - [`train`]: triplet sampling and the per-modality training loop with
//!   validation-EER early stopping.
//! - [`eval`]: the enrollment/verification protocol, genuine/impostor score
//!   tables, EER and DET metrics.
//! - [`fusion`]: weighted score-level fusion over modality subsets.
//!
//! Everything here is deterministic given explicit seeds, IO-free, and
//! `no_std`-compatible (with `alloc`). File formats, dataset ingestion, and
//! the command line live in the companion `biofuse` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
mod math;
pub mod nn;
pub mod preprocess;
pub mod seed;
pub mod train;
pub mod window;

pub use error::CoreError;

/// Result alias used across the crate.
pub type Result<T> = core::result::Result<T, CoreError>;

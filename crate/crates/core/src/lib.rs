//! Synthesis of speech audio from non-negative weighting maps.
//!
//! The pipeline runs from non-negative motion features to audio:
//!
//! * [`nmf`] factorizes motion features into building blocks and a sparse,
//!   graph-regularized weighting map `H` (20 rows, variable width).
//! * [`model`] holds the plastic light transformer translator: windowed
//!   local attention with a directional relative position bias, global
//!   token aggregation/broadcast and single-level spatial pyramid pooling,
//!   mapping any width of `H` to an `8x8x20` latent, then a
//!   deconvolutional decoder to a `64x64` mel-spectrogram.
//! * [`train`] has the losses (MSE, latent MMD, adversarial), data
//!   augmentation, a synthetic paired corpus and a leave-one-subject-out
//!   harness.
//! * [`dsp`] converts between waveforms and mel-spectrograms and recovers
//!   audio with Griffin-Lim.
//! * [`tensor`] is the small autodiff engine everything trains on.

pub mod commands;
pub mod dsp;
pub mod error;
pub mod io;
pub mod model;
pub mod nmf;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

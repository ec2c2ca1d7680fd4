//! Learned convolutional sparse coding for denoising quasi-periodic pulse
//! signals (photoplethysmography).
//!
//! An unfolded iterative-shrinkage encoder maps a corrupted segment to a
//! sparse code, and a single-convolution dictionary decoder reconstructs the
//! clean waveform from it.

pub mod checkpoint;
mod conv;
pub mod csc;
pub mod error;
pub mod eval;
mod linalg;
pub mod pipeline;
pub mod signal;
pub mod synth;
pub mod training;
pub mod unfolded;

pub use error::{Error, Result};
pub use signal::Signal;

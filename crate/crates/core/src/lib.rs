//! Pitch-synchronous multi-scale GAN vocoder.
//!
//! Speech (or its LP residual, the "glottal" target) is cut into 512-sample
//! frames centred on glottal closure instants. A dilated conditioning network
//! turns 200 Hz acoustic features into per-scale conditioning, a generator
//! upsamples noise from 32 to 512 samples while emitting a waveform at every
//! scale, and a critic scores all scales jointly. Synthesis reassembles the
//! generated frames by pitch-synchronous overlap-add.

pub mod dsp;
mod error;
pub mod features;
pub mod gradcheck;
pub mod model;
pub mod registry;
pub mod training;
pub mod vocoder;

pub use error::{Error, Result};

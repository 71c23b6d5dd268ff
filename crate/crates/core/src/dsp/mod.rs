//! Classical signal processing: linear prediction, line spectral
//! frequencies, time-varying filtering, GCI marking, framing, PSOLA.

mod filter;
mod frames;
mod gci;
mod lpc;
mod lsf;
mod pitch;
mod spectrum;
pub mod wav;

pub use filter::{filter_time_varying, FilterMode};
pub use frames::{acoustic_frame_targets, build_pyramid, extract_frames, psola_assemble, psola_window_sum, WaveformPyramid};
pub use gci::{
    detect_gci, gci_detectors, read_mark_file, DetectorOptions, unvoiced_marks, write_mark_file, GciDetector, GciMarks,
    MarkFileDetector, ResidualPeakDetector,
};
pub use lpc::{autocorrelation, levinson, lpc_residual_track, LpcCoeffs};
pub(crate) use lpc::{analyze_lpc, filter_segment_inverse};
pub use lsf::{lpc_to_lsf, lsf_to_lpc, Lsf};
pub use pitch::{estimate_f0, F0Track};
pub use spectrum::{fft_magnitude, magnitude_spectrum};

use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// Samples per 5 ms analysis frame (200 Hz frame rate).
pub const HOP: usize = 80;
/// Length of a GCI-centred waveform frame.
pub const FRAME_LEN: usize = 512;
/// Number of pyramid levels: 512, 256, 128, 64, 32.
pub const LEVELS: usize = 5;

/// Mono audio at a fixed sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("signal sample {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of 5 ms frames covering the signal.
    pub fn frame_count(&self) -> usize {
        self.samples.len().div_ceil(HOP)
    }
}

/// Hann window of length `n` (periodic=false).
pub(crate) fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Copies `len` samples starting at `start` (may be negative), zero outside.
pub(crate) fn segment(x: &[f64], start: isize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let i = start + k as isize;
            if i < 0 || i as usize >= x.len() {
                0.0
            } else {
                x[i as usize]
            }
        })
        .collect()
}

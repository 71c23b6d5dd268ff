use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::FRAME_LEN;
use crate::{Error, Result};

/// `|DFT|` of an arbitrary-length real sequence, bins `0..=n/2`.
pub fn magnitude_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Linear magnitude of the un-windowed 512-point DFT, 257 bins.
pub fn fft_magnitude(frame: &[f64]) -> Result<Vec<f64>> {
    if frame.len() != FRAME_LEN {
        return Err(Error::Invalid(format!("expected {FRAME_LEN} samples, got {}", frame.len())));
    }
    Ok(magnitude_spectrum(frame))
}

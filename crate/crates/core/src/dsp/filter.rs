use super::{LpcCoeffs, Signal, HOP};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    /// All-pole `1 / A(z)`.
    Synthesis,
    /// FIR `A(z)`.
    Inverse,
}

/// Filters with one coefficient set per 5 ms frame. Coefficients switch at
/// frame boundaries; the filter memory runs on uninterrupted.
pub fn filter_time_varying(signal: &Signal, frames: &[LpcCoeffs], mode: FilterMode) -> Result<Signal> {
    let needed = signal.frame_count();
    if frames.len() < needed {
        return Err(Error::Invalid(format!("{} coefficient frames for {needed} signal frames", frames.len())));
    }
    if let Some(i) = frames[..needed].iter().position(|f| !f.is_minimum_phase()) {
        return Err(Error::Domain(format!("coefficient frame {i} is unstable")));
    }
    let x = &signal.samples;
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let a = frames[n / HOP].coeffs();
        let taps = a.len().min(n + 1);
        y[n] = match mode {
            FilterMode::Inverse => x[n] + (1..taps).map(|k| a[k] * x[n - k]).sum::<f64>(),
            FilterMode::Synthesis => x[n] - (1..taps).map(|k| a[k] * y[n - k]).sum::<f64>(),
        };
    }
    Signal::new(y, signal.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: Vec<f64>) -> Signal {
        Signal::from_samples(v).unwrap()
    }

    #[test]
    fn identity_filter_passes_through() {
        let x = sig((0..200).map(|i| (i as f64 * 0.1).sin()).collect());
        let frames = vec![LpcCoeffs::identity(0); 3];
        for mode in [FilterMode::Synthesis, FilterMode::Inverse] {
            assert_eq!(filter_time_varying(&x, &frames, mode).unwrap(), x);
        }
    }

    #[test]
    fn one_pole_impulse_response() {
        let mut x = vec![0.0; 160];
        x[0] = 1.0;
        let frames = vec![LpcCoeffs::new(vec![1.0, -0.9]).unwrap(); 2];
        let y = filter_time_varying(&sig(x), &frames, FilterMode::Synthesis).unwrap();
        for (n, v) in y.samples.iter().enumerate() {
            assert!((v - 0.9f64.powi(n as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn unstable_or_short_tracks_are_rejected() {
        let x = sig(vec![0.0; 100]);
        let bad = vec![LpcCoeffs::new(vec![1.0, -1.2]).unwrap(); 2];
        assert!(matches!(filter_time_varying(&x, &bad, FilterMode::Synthesis), Err(Error::Domain(_))));
        let short = vec![LpcCoeffs::identity(2)];
        assert!(filter_time_varying(&x, &short, FilterMode::Inverse).is_err());
    }
}

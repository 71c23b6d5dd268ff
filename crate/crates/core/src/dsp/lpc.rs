use super::{hann, segment, FilterMode, Signal, HOP};
use crate::{Error, Result};

/// Prediction-error polynomial `A(z) = 1 + a1 z^-1 + ... + ap z^-p`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpcCoeffs {
    a: Vec<f64>,
}

impl LpcCoeffs {
    /// Accepts `a` with `a[0] = 1`.
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.first() != Some(&1.0) {
            return Err(Error::Domain("LPC polynomial must start with 1".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LPC coefficients".into()));
        }
        Ok(Self { a })
    }

    /// `A(z) = 1` of the given order.
    pub fn identity(order: usize) -> Self {
        let mut a = vec![0.0; order + 1];
        a[0] = 1.0;
        Self { a }
    }

    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.a
    }

    /// Reflection coefficients by step-down recursion, or `None` if some
    /// `|k| >= 1` (not minimum phase).
    pub fn reflection(&self) -> Option<Vec<f64>> {
        let p = self.order();
        let mut a = self.a.clone();
        let mut ks = vec![0.0; p];
        for i in (1..=p).rev() {
            let k = a[i];
            if !(k.abs() < 1.0) {
                return None;
            }
            ks[i - 1] = k;
            let d = 1.0 - k * k;
            let prev: Vec<f64> = (0..i).map(|j| (a[j] - k * a[i - j]) / d).collect();
            a[..i].copy_from_slice(&prev);
        }
        Some(ks)
    }

    pub fn is_minimum_phase(&self) -> bool {
        self.reflection().is_some()
    }
}

/// Biased autocorrelation `r[k] = sum x[n] x[n+k]`, `k = 0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| if k < x.len() { x[..x.len() - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum() } else { 0.0 })
        .collect()
}

/// Levinson-Durbin recursion.
pub fn levinson(autocorr: &[f64], order: usize) -> Result<LpcCoeffs> {
    if autocorr.len() < order + 1 {
        return Err(Error::Analysis(format!(
            "autocorrelation has {} lags, order {order} needs {}",
            autocorr.len(),
            order + 1
        )));
    }
    let r0 = autocorr[0];
    if !(r0 > 0.0) {
        return Err(Error::Analysis("zero-lag energy must be positive".into()));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r0;
    for i in 1..=order {
        let acc: f64 = autocorr[i] + (1..i).map(|j| a[j] * autocorr[i - j]).sum::<f64>();
        let k = -acc / err;
        if !(k.abs() < 1.0) {
            return Err(Error::Analysis(format!("reflection coefficient {k} at order {i}")));
        }
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    LpcCoeffs::new(a)
}

/// Hann-windowed LPC analysis of one frame with a tiny white-noise floor so
/// silent input yields the identity predictor.
pub(crate) fn analyze_lpc(x: &[f64], centre: isize, win: &[f64], order: usize) -> LpcCoeffs {
    let seg = segment(x, centre - (win.len() / 2) as isize, win.len());
    let w: Vec<f64> = seg.iter().zip(win).map(|(s, h)| s * h).collect();
    let mut r = autocorrelation(&w, order);
    r[0] = r[0] * (1.0 + 1e-9) + 1e-10;
    levinson(&r, order).unwrap_or_else(|_| LpcCoeffs::identity(order))
}

/// Inverse-filters `x[start .. start+len)` with `A(z)`, using the preceding
/// samples as filter history.
pub(crate) fn filter_segment_inverse(x: &[f64], start: isize, len: usize, lpc: &LpcCoeffs) -> Vec<f64> {
    let a = lpc.coeffs();
    let p = lpc.order();
    let seg = segment(x, start - p as isize, len + p);
    (0..len).map(|n| (0..=p).map(|k| a[k] * seg[n + p - k]).sum()).collect()
}

/// Frame-wise LPC (25 ms Hann, 5 ms hop) followed by inverse filtering.
pub fn lpc_residual_track(signal: &Signal, order: usize) -> Result<(Vec<LpcCoeffs>, Signal)> {
    let win = hann(400);
    let frames: Vec<LpcCoeffs> = (0..signal.frame_count())
        .map(|f| analyze_lpc(&signal.samples, (f * HOP + HOP / 2) as isize, &win, order))
        .collect();
    let residual = super::filter_time_varying(signal, &frames, FilterMode::Inverse)?;
    Ok((frames, residual))
}

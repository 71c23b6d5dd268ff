use std::f64::consts::PI;

use super::{GciMarks, Signal, FRAME_LEN, HOP, LEVELS};
use crate::{Error, Result};

/// A GCI-centred frame at full resolution (level 0, 512 samples) and its
/// mean-pooled versions down to 32 samples (level 4).
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformPyramid {
    levels: Vec<Vec<f64>>,
}

impl WaveformPyramid {
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &[f64] {
        &self.levels[i]
    }

    pub fn full(&self) -> &[f64] {
        &self.levels[0]
    }
}

/// Non-tapered frames `signal[m - half .. m + half)` around each mark,
/// zero-padded past the signal edges.
pub fn extract_frames(signal: &Signal, marks: &GciMarks, frame_len: usize) -> Result<Vec<Vec<f64>>> {
    if frame_len % 2 != 0 {
        return Err(Error::Invalid(format!("frame length {frame_len} must be even")));
    }
    let half = (frame_len / 2) as isize;
    Ok(marks
        .positions()
        .iter()
        .map(|&m| super::segment(&signal.samples, m as isize - half, frame_len))
        .collect())
}

/// One frame per 5 ms acoustic frame, centred on the mark nearest the
/// acoustic frame's centre.
pub fn acoustic_frame_targets(signal: &Signal, marks: &GciMarks, count: usize) -> Result<Vec<Vec<f64>>> {
    if marks.is_empty() {
        return Err(Error::Invalid("no marks to centre frames on".into()));
    }
    let per_mark = extract_frames(signal, marks, FRAME_LEN)?;
    Ok((0..count)
        .map(|f| per_mark[marks.nearest(f * HOP + HOP / 2).expect("marks non-empty")].clone())
        .collect())
}

pub fn build_pyramid(frame: &[f64]) -> Result<WaveformPyramid> {
    if frame.len() != FRAME_LEN {
        return Err(Error::Invalid(format!("pyramid input has {} samples, expected {FRAME_LEN}", frame.len())));
    }
    let mut levels = Vec::with_capacity(LEVELS);
    levels.push(frame.to_vec());
    for i in 1..LEVELS {
        let prev = &levels[i - 1];
        let next: Vec<f64> = prev.chunks_exact(2).map(|p| (p[0] + p[1]) / 2.0).collect();
        levels.push(next);
    }
    Ok(WaveformPyramid { levels })
}

// Weight of the right-hand mark at sample `n` when cross-fading from mark
// `a` to mark `a + d`. The fade is a raised cosine of width
// `min(d, 2*half - d)` centred between the marks, so both windows stay inside
// their `[-half, half)` frame support; the left mark gets the complement.
fn crossfade(n: f64, a: f64, d: f64, half: f64) -> f64 {
    let width = d.min(2.0 * half - d).max(0.0);
    let start = a + (d - width) / 2.0;
    if width == 0.0 {
        return if n >= start { 1.0 } else { 0.0 };
    }
    if n <= start {
        0.0
    } else if n >= start + width {
        1.0
    } else {
        0.5 * (1.0 - (PI * (n - start) / width).cos())
    }
}

/// Synthesis window of mark `j` evaluated at absolute sample `n`.
fn window(positions: &[usize], j: usize, n: isize, half: usize) -> f64 {
    let m = positions[j] as isize;
    let h = half as f64;
    let off = n - m;
    if off < -(half as isize) || off >= half as isize {
        return 0.0;
    }
    let nf = n as f64;
    if off <= 0 {
        match j.checked_sub(1).map(|p| positions[p]) {
            Some(prev) => crossfade(nf, prev as f64, (m - prev as isize) as f64, h),
            None => {
                // Outer edge: a plain rising Hann half mirroring the right side.
                let len = positions.get(j + 1).map_or(h, |&nx| ((nx as isize - m) as f64).min(h));
                if (-off) as f64 >= len {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * (-off) as f64 / len).cos())
                }
            }
        }
    } else {
        match positions.get(j + 1) {
            Some(&next) => 1.0 - crossfade(nf, m as f64, (next as isize - m) as f64, h),
            None => {
                let len = j.checked_sub(1).map_or(h, |p| ((m - positions[p] as isize) as f64).min(h));
                if off as f64 >= len {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * off as f64 / len).cos())
                }
            }
        }
    }
}

/// Sum of all synthesis windows over `[0, out_len)`.
pub fn psola_window_sum(marks: &GciMarks, frame_len: usize, out_len: usize) -> Vec<f64> {
    let ones = vec![vec![1.0; frame_len]; marks.len()];
    psola_assemble(&ones, marks, out_len).map(|s| s.samples).unwrap_or_default()
}

/// Pitch-synchronous overlap-add. Frames are tapered with asymmetric
/// raised-cosine halves reaching to the neighbouring marks and added at their
/// marks. Between the first and last mark the windows sum to one whenever
/// neighbouring marks are at most one frame length apart.
pub fn psola_assemble(frames: &[Vec<f64>], marks: &GciMarks, out_len: usize) -> Result<Signal> {
    if frames.len() < marks.len() {
        return Err(Error::Invalid(format!("{} frames for {} marks", frames.len(), marks.len())));
    }
    let pos = marks.positions();
    let mut out = vec![0.0; out_len];
    for (j, &m) in pos.iter().enumerate() {
        let frame = &frames[j];
        let half = frame.len() / 2;
        for (k, &v) in frame.iter().enumerate() {
            let n = m as isize + k as isize - half as isize;
            if n < 0 || n as usize >= out_len {
                continue;
            }
            let w = window(pos, j, n, half);
            if w != 0.0 {
                out[n as usize] += w * v;
            }
        }
    }
    Signal::from_samples(out)
}

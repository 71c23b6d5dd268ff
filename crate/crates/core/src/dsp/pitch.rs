use super::{segment, Signal, HOP};

/// Per-frame F0 in Hz with voicing decisions (5 ms frames).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct F0Track {
    pub hz: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hz.is_empty()
    }

    /// Raw form: 0 Hz marks unvoiced frames.
    pub fn raw(&self) -> Vec<f64> {
        self.hz.iter().zip(&self.voiced).map(|(&f, &v)| if v { f } else { 0.0 }).collect()
    }
}

const WINDOW: usize = 640;
const MIN_LAG: usize = 32;
const MAX_LAG: usize = 320;
const VOICING_THRESHOLD: f64 = 0.5;
const SILENCE_RMS: f64 = 1e-4;

/// Normalized-autocorrelation pitch tracker over 40 ms windows centred on
/// each 5 ms frame, lag range 50-500 Hz. Unvoiced frames report 0 Hz.
pub fn estimate_f0(signal: &Signal) -> F0Track {
    let x = &signal.samples;
    let frames = signal.frame_count();
    let span = WINDOW + MAX_LAG;
    let mut hz = Vec::with_capacity(frames);
    let mut voiced = Vec::with_capacity(frames);
    for f in 0..frames {
        let centre = (f * HOP + HOP / 2) as isize;
        let seg = segment(x, centre - (span / 2) as isize, span);
        let head = &seg[..WINDOW];
        let e0: f64 = head.iter().map(|v| v * v).sum();
        if (e0 / WINDOW as f64).sqrt() < SILENCE_RMS {
            hz.push(0.0);
            voiced.push(false);
            continue;
        }
        let nacf: Vec<f64> = (0..=MAX_LAG)
            .map(|lag| {
                if lag < MIN_LAG - 1 {
                    return 0.0;
                }
                let tail = &seg[lag..lag + WINDOW];
                let cross: f64 = head.iter().zip(tail).map(|(a, b)| a * b).sum();
                let et: f64 = tail.iter().map(|v| v * v).sum();
                if et <= 0.0 {
                    0.0
                } else {
                    cross / (e0 * et).sqrt()
                }
            })
            .collect();
        let best = (MIN_LAG..=MAX_LAG).map(|l| nacf[l]).fold(f64::MIN, f64::max);
        if best < VOICING_THRESHOLD {
            hz.push(0.0);
            voiced.push(false);
            continue;
        }
        // First local maximum reaching 90 % of the best peak avoids
        // sub-harmonic (period-doubling) picks.
        let lag = (MIN_LAG..=MAX_LAG)
            .find(|&l| {
                nacf[l] >= 0.9 * best && nacf[l] >= nacf[l - 1] && (l == MAX_LAG || nacf[l] >= nacf[l + 1])
            })
            .unwrap_or(MIN_LAG);
        let refined = if lag > MIN_LAG && lag < MAX_LAG {
            let (a, b, c) = (nacf[lag - 1], nacf[lag], nacf[lag + 1]);
            let den = a - 2.0 * b + c;
            if den < 0.0 {
                lag as f64 + 0.5 * (a - c) / den
            } else {
                lag as f64
            }
        } else {
            lag as f64
        };
        hz.push(signal.sample_rate as f64 / refined);
        voiced.push(true);
    }
    F0Track { hz, voiced }
}

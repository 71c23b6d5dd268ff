//! Synthetic "glottal" data: trains of exponentially decaying pulses at a
//! fixed F0, filtered by a vowel-like all-pole filter to make the
//! analysed signal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Utterance};
use crate::dsp::{acoustic_frame_targets, filter_time_varying, FilterMode, GciMarks, LpcCoeffs, Signal, HOP, SAMPLE_RATE};
use crate::features::extract_features;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct ToySpec {
    pub f0s: Vec<f64>,
    /// Total duration over all utterances.
    pub seconds: f64,
    pub utterances_per_f0: usize,
    pub pulse_amplitude: f64,
    /// Pulse decay time constant in samples.
    pub decay: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self { f0s: vec![100.0, 125.0, 160.0], seconds: 60.0, utterances_per_f0: 4, pulse_amplitude: 0.5, decay: 24.0, seed: 0 }
    }
}

/// Negative-going pulses `-a exp(-n / decay)` starting at each mark.
pub fn pulse_train(f0: f64, len: usize, offset: usize, amplitude: f64, decay: f64) -> (Signal, GciMarks) {
    let period = SAMPLE_RATE as f64 / f0;
    let mut positions = Vec::new();
    let mut t = offset as f64;
    while (t.round() as usize) < len {
        positions.push(t.round() as usize);
        t += period;
    }
    let mut x = vec![0.0; len];
    for &p in &positions {
        for (n, v) in x[p..].iter_mut().enumerate().take((12.0 * decay) as usize) {
            *v -= amplitude * (-(n as f64) / decay).exp();
        }
    }
    let voiced = vec![true; positions.len()];
    let marks = GciMarks::new(positions, voiced).expect("increasing positions");
    (Signal::from_samples(x).expect("finite pulses"), marks)
}

/// Fixed vowel-like all-pole filter (three resonances).
pub fn vowel_filter() -> LpcCoeffs {
    let mut a = vec![1.0];
    for (f, bw) in [(700.0, 130.0), (1220.0, 70.0), (2600.0, 160.0)] {
        let r = (-std::f64::consts::PI * bw / SAMPLE_RATE as f64).exp();
        let w = 2.0 * std::f64::consts::PI * f / SAMPLE_RATE as f64;
        let sec = [1.0, -2.0 * r * w.cos(), r * r];
        let mut next = vec![0.0; a.len() + 2];
        for (i, &ai) in a.iter().enumerate() {
            for (j, &sj) in sec.iter().enumerate() {
                next[i + j] += ai * sj;
            }
        }
        a = next;
    }
    LpcCoeffs::new(a).expect("leading one")
}

/// `(speech, excitation, marks)` for one utterance.
pub fn toy_utterance(f0: f64, len: usize, seed: u64, spec: &ToySpec) -> Result<(Signal, Signal, GciMarks)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = 40 + (seed as usize * 37) % 80;
    let (exc, marks) = pulse_train(f0, len, offset, spec.pulse_amplitude, spec.decay);
    let frames = vec![vowel_filter(); len.div_ceil(HOP)];
    let speech = filter_time_varying(&exc, &frames, FilterMode::Synthesis)?;
    let peak = speech.samples.iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-9);
    let noise = Normal::new(0.0, 1e-4).expect("valid deviation");
    let samples = speech.samples.iter().map(|v| 0.5 * v / peak + noise.sample(&mut rng)).collect();
    Ok((Signal::from_samples(samples)?, exc, marks))
}

/// Feature-aligned toy dataset with the known excitation as target.
pub fn toy_dataset(spec: &ToySpec) -> Result<Dataset> {
    let count = spec.f0s.len() * spec.utterances_per_f0;
    let len = ((spec.seconds / count as f64) * SAMPLE_RATE as f64) as usize;
    let mut utterances = Vec::with_capacity(count);
    for (i, &f0) in spec.f0s.iter().enumerate() {
        for k in 0..spec.utterances_per_f0 {
            let seed = spec.seed.wrapping_mul(1000) + (i * spec.utterances_per_f0 + k) as u64;
            let (speech, exc, marks) = toy_utterance(f0, len, seed, spec)?;
            let name = format!("toy-{f0:.0}hz-{k}");
            let features = extract_features(&speech, &marks, &name)?;
            let targets = acoustic_frame_targets(&exc, &marks, features.len())?;
            utterances.push(Utterance::from_frames(features, &targets)?);
        }
    }
    Ok(Dataset { utterances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_marks_follow_f0() {
        let (x, m) = pulse_train(100.0, 1600, 10, 0.5, 24.0);
        assert_eq!(m.positions(), &[10, 170, 330, 490, 650, 810, 970, 1130, 1290, 1450]);
        assert_eq!(x.samples[10], -0.5);
        assert!(x.samples[9] == 0.0 && x.samples[11] < 0.0);
    }

    #[test]
    fn small_dataset_is_aligned() {
        let spec = ToySpec { seconds: 0.6, utterances_per_f0: 1, ..Default::default() };
        let d = toy_dataset(&spec).unwrap();
        assert_eq!(d.utterances.len(), 3);
        for u in &d.utterances {
            assert_eq!(u.len(), 40);
            assert_eq!(u.features.len(), 40);
            assert!(u.features.frames[10..30].iter().all(|f| f.voicing == 1.0));
        }
        let f0 = d.utterances[2].features.frames[20].f0_hz();
        assert!((f0 - 160.0).abs() < 2.0, "{f0}");
    }
}

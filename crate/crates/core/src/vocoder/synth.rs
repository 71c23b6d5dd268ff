use psgan_nn::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TargetMode;
use crate::dsp::{psola_assemble, GciMarks, Signal, FRAME_LEN, HOP, SAMPLE_RATE};
use crate::features::{FeatureStats, FeatureTrack, DIM};
use crate::model::{conditioning, generate, Checkpoint, Networks, NoiseBundle};
use crate::{Error, Result};

/// Frames per inference window when the training segment length is unknown.
pub const WINDOW_FRAMES: usize = 150;
/// Frames of context on each side of a window's kept core. The generator
/// sees 35 frames either way, so outputs in the core match a single pass
/// over the whole utterance exactly.
pub const CONTEXT_FRAMES: usize = 35;

/// `(window, context)` for a model trained on segments of `segment` frames.
/// Windows never exceed the training length, so every frame is generated at
/// a position the model saw during training; short segments get a
/// proportionally short context.
pub fn inference_window(segment: Option<usize>) -> (usize, usize) {
    match segment {
        Some(s) if s <= 2 * CONTEXT_FRAMES => (s.max(1), s.saturating_sub(1) / 2),
        Some(s) => (s, CONTEXT_FRAMES),
        None => (WINDOW_FRAMES, CONTEXT_FRAMES),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisOptions {
    /// Seeds the generator noise and the unvoiced excitation.
    pub seed: u64,
    /// Output peak after normalisation.
    pub peak: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { seed: 0, peak: 0.89 }
    }
}

/// Greedy mark placement: from a voiced mark the next one follows after
/// `round(fs / F0)` samples, using the F0 of the frame holding the current
/// mark; unvoiced stretches advance by one hop.
pub fn derive_synthesis_marks(f0_hz: &[f64], voiced: &[bool], len: usize) -> GciMarks {
    let mut positions = Vec::new();
    let mut flags = Vec::new();
    let frames = f0_hz.len().min(voiced.len());
    let mut t = 0usize;
    while t < len {
        let f = (t / HOP).min(frames.saturating_sub(1));
        let v = frames > 0 && voiced[f] && f0_hz[f] > 0.0;
        positions.push(t);
        flags.push(v);
        t += if v { ((SAMPLE_RATE as f64 / f0_hz[f]).round() as usize).max(1) } else { HOP };
    }
    GciMarks::new(positions, flags).expect("strictly increasing marks")
}

/// Where and from which acoustic frame each output period is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisPlan {
    pub marks: GciMarks,
    /// Acoustic frame conditioning mark `j`.
    pub frame_of_mark: Vec<usize>,
    pub out_len: usize,
}

impl SynthesisPlan {
    pub fn new(features: &FeatureTrack) -> Self {
        let f0: Vec<f64> = features.frames.iter().map(|f| f.f0_hz()).collect();
        let voiced: Vec<bool> = features.frames.iter().map(|f| f.is_voiced()).collect();
        let out_len = features.len() * HOP;
        let marks = derive_synthesis_marks(&f0, &voiced, out_len);
        let last = features.len().saturating_sub(1);
        let frame_of_mark = marks.positions().iter().map(|&p| (p / HOP).min(last)).collect();
        Self { marks, frame_of_mark, out_len }
    }
}

/// Full-resolution generator output, one 512-sample frame per acoustic
/// frame, computed in windows of `window` frames that keep all but
/// `context` frames on each side.
pub fn generate_frames(
    nets: &Networks<f32>,
    stats: &FeatureStats,
    features: &FeatureTrack,
    noise: &NoiseBundle<f32>,
    window: usize,
    context: usize,
) -> Result<Vec<Vec<f64>>> {
    let total = features.len();
    if window <= 2 * context {
        return Err(Error::Invalid(format!("inference window of {window} frames leaves no core")));
    }
    let core = window - 2 * context;
    let mut out = Vec::with_capacity(total);
    let mut start = 0;
    while start < total {
        let lo = start.saturating_sub(context);
        let hi = (start + core + context).min(total);
        let n = hi - lo;
        let mut input = Tensor::zeros([1, DIM, n, 1]);
        for (i, frame) in features.frames[lo..hi].iter().enumerate() {
            for (d, &x) in stats.normalize(&frame.to_vector()).iter().enumerate() {
                let idx = input.index([0, d, i, 0]);
                input.data_mut()[idx] = x;
            }
        }
        let g = Graph::new();
        let cond = conditioning(&nets.arch, &nets.cond.bind(&g), g.leaf(input))?;
        let levels = generate(&nets.arch, &nets.gen.bind(&g), &cond, &noise.frames(lo, n))?;
        let full = levels[0].value();
        let keep_end = (start + core).min(total);
        for f in start..keep_end {
            let idx = full.index([0, 0, f - lo, 0]);
            out.push(full.data()[idx..idx + FRAME_LEN].iter().map(|&v| v as f64).collect());
        }
        start = keep_end;
    }
    Ok(out)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Vocodes a feature track: generated frames are overlap-added at marks
/// derived from the F0 track, unvoiced marks get white noise at the
/// generator's own level, and the mode turns the result into speech.
pub fn synthesize(features: &FeatureTrack, ckpt: &Checkpoint, mode: &dyn TargetMode, opts: &SynthesisOptions) -> Result<Signal> {
    if let Some(trained) = ckpt.extra.pointer("/config/mode").and_then(|v| v.as_str()) {
        if trained != mode.name() {
            return Err(Error::Invalid(format!("checkpoint was trained in {trained} mode, not {}", mode.name())));
        }
    }
    if ckpt.stats.mean.len() != DIM {
        return Err(Error::Checkpoint(format!("normalisation statistics have {} dims, expected {DIM}", ckpt.stats.mean.len())));
    }
    if features.is_empty() {
        return Signal::from_samples(Vec::new());
    }
    for (i, f) in features.frames.iter().enumerate() {
        f.validate().map_err(|e| Error::Invalid(format!("feature frame {i}: {e}")))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = NoiseBundle::sample(&mut rng, 1, features.len());
    let segment = ckpt.extra.pointer("/config/segment_frames").and_then(|v| v.as_u64()).map(|v| v as usize);
    let (window, context) = inference_window(segment);
    let frames = generate_frames(&ckpt.nets, &ckpt.stats, features, &noise, window, context)?;

    let plan = SynthesisPlan::new(features);
    let voiced = plan.marks.voiced();
    let excitation: Vec<Vec<f64>> = plan
        .frame_of_mark
        .iter()
        .zip(voiced)
        .map(|(&f, &v)| {
            if v {
                frames[f].clone()
            } else {
                let g = rms(&frames[f]);
                (0..FRAME_LEN)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        g * z
                    })
                    .collect()
            }
        })
        .collect();
    let assembled = psola_assemble(&excitation, &plan.marks, plan.out_len)?;
    let mut y = mode.render(assembled, features)?;
    let peak = y.samples.iter().fold(0f64, |m, v| m.max(v.abs()));
    if !peak.is_finite() {
        return Err(Error::NonFinite("synthesised signal".into()));
    }
    if peak > 0.0 {
        let g = opts.peak / peak;
        y.samples.iter_mut().for_each(|v| *v *= g);
    }
    Ok(y)
}

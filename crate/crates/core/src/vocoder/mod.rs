//! End-to-end pipelines: analysis of recorded speech, dataset preparation,
//! copy-synthesis from features and objective evaluation.

mod eval;
mod prepare;
mod synth;

pub use eval::{evaluate, evaluate_dirs, evaluate_pair, EvalReport, UtteranceScores};
pub use prepare::{prepare_dataset, write_f0_file, PrepareSummary};
pub use synth::{derive_synthesis_marks, generate_frames, inference_window, synthesize, SynthesisOptions, SynthesisPlan, CONTEXT_FRAMES, WINDOW_FRAMES};

use crate::dsp::{estimate_f0, filter_time_varying, F0Track, FilterMode, GciDetector, GciMarks, Signal};
use crate::features::{extract_features, interpolate_f0, FeatureTrack};
use crate::registry::Registry;
use crate::Result;

/// What the generator learns to produce and how its output becomes speech.
pub trait TargetMode {
    fn name(&self) -> &str;
    /// Waveform whose GCI-centred frames form the training targets.
    fn target(&self, speech: &Signal, features: &FeatureTrack) -> Result<Signal>;
    /// Turns the overlap-added generator output into speech.
    fn render(&self, assembled: Signal, features: &FeatureTrack) -> Result<Signal>;
}

/// Generator produces the LP residual; speech comes from the all-pole
/// vocal-tract filter of each frame.
pub struct GlottalMode;

/// Generator produces speech directly.
pub struct SpeechMode;

fn vt_filters(features: &FeatureTrack) -> Result<Vec<crate::dsp::LpcCoeffs>> {
    features.frames.iter().map(|f| f.vt_lpc()).collect()
}

impl TargetMode for GlottalMode {
    fn name(&self) -> &str {
        "glottal"
    }

    fn target(&self, speech: &Signal, features: &FeatureTrack) -> Result<Signal> {
        filter_time_varying(speech, &vt_filters(features)?, FilterMode::Inverse)
    }

    fn render(&self, assembled: Signal, features: &FeatureTrack) -> Result<Signal> {
        filter_time_varying(&assembled, &vt_filters(features)?, FilterMode::Synthesis)
    }
}

impl TargetMode for SpeechMode {
    fn name(&self) -> &str {
        "speech"
    }

    fn target(&self, speech: &Signal, _features: &FeatureTrack) -> Result<Signal> {
        Ok(speech.clone())
    }

    fn render(&self, assembled: Signal, _features: &FeatureTrack) -> Result<Signal> {
        Ok(assembled)
    }
}

pub fn target_modes() -> Registry<dyn TargetMode, ()> {
    let mut r: Registry<dyn TargetMode, ()> = Registry::new("target mode");
    r.register("glottal", |_| Ok(Box::new(GlottalMode)));
    r.register("speech", |_| Ok(Box::new(SpeechMode)));
    r
}

/// Pitch track, GCI marks and acoustic features of one recording.
#[derive(Clone, Debug)]
pub struct Analysis {
    /// Raw autocorrelation track; unvoiced frames hold 0 Hz.
    pub f0: F0Track,
    pub marks: GciMarks,
    pub features: FeatureTrack,
}

/// Runs pitch tracking, GCI detection and feature extraction.
pub fn analyze(signal: &Signal, detector: &dyn GciDetector, utterance: &str) -> Result<Analysis> {
    let f0 = estimate_f0(signal);
    let (hz, voiced) = interpolate_f0(&f0.raw());
    let marks = detector.detect(signal, &F0Track { hz, voiced }, utterance)?;
    let features = extract_features(signal, &marks, utterance)?;
    Ok(Analysis { f0, marks, features })
}

use std::fs;

use psgan_core::dsp::wav::write_wav;
use psgan_core::dsp::*;
use psgan_core::features::{read_features, FeatureStats};
use psgan_core::model::{ArchConfig, Checkpoint, Networks, NoiseBundle};
use psgan_core::training::toy::{toy_utterance, ToySpec};
use psgan_core::training::{decode_pyramids, TrainConfig, MANIFEST};
use psgan_core::vocoder::*;
use psgan_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vowel(f0: f64, len: usize, seed: u64) -> Signal {
    toy_utterance(f0, len, seed, &ToySpec::default()).unwrap().0
}

fn small_checkpoint(mode: &str) -> Checkpoint {
    let arch = ArchConfig { gen_channels: 4, disc_channels: 4, cond_channels: 4, cond_out: 2, ..Default::default() };
    let nets = Networks::init(&arch, 3).unwrap();
    let mut ck = Checkpoint::new(nets, FeatureStats::identity());
    let config = TrainConfig { mode: mode.into(), arch, ..Default::default() };
    ck.extra = serde_json::json!({ "config": config });
    ck
}

fn snr_db(reference: &[f64], test: &[f64]) -> f64 {
    let s: f64 = reference.iter().map(|v| v * v).sum();
    let e: f64 = reference.iter().zip(test).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (s / e).log10()
}

fn detector() -> Box<dyn GciDetector> {
    gci_detectors().create("lp-residual", &Default::default()).unwrap()
}

#[test]
fn prepares_dataset_and_skips_bad_audio() {
    let dir = tempfile::tempdir().unwrap();
    let (wavs, out) = (dir.path().join("wav"), dir.path().join("data"));
    fs::create_dir(&wavs).unwrap();
    write_wav(&wavs.join("a.wav"), &vowel(120.0, 16000, 1)).unwrap();
    write_wav(&wavs.join("b.wav"), &vowel(150.0, 8000, 2)).unwrap();
    fs::write(wavs.join("broken.wav"), b"not a wav").unwrap();
    write_wav(&wavs.join("short.wav"), &Signal::from_samples(vec![0.0; 100]).unwrap()).unwrap();
    let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(wavs.join("rate.wav"), spec).unwrap();
    (0..800).for_each(|_| w.write_sample(0i16).unwrap());
    w.finalize().unwrap();
    fs::write(wavs.join("notes.txt"), b"ignored").unwrap();

    let mode = target_modes().create("glottal", &()).unwrap();
    let summary = prepare_dataset(&wavs, &out, mode.as_ref(), detector().as_ref()).unwrap();
    assert_eq!(summary.prepared, vec!["a", "b"]);
    assert_eq!(summary.skipped.len(), 3);

    let manifest = fs::read_to_string(out.join(MANIFEST)).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    let feats = read_features(&out.join("a.psgf")).unwrap();
    assert_eq!(feats.len(), 200);
    let pyr_path = out.join("a.psgp");
    assert_eq!(decode_pyramids(&fs::read(&pyr_path).unwrap(), &pyr_path).unwrap().len(), 200);
    assert_eq!(fs::read_to_string(out.join("a.f0")).unwrap().lines().count(), 200);
    let marks = read_mark_file(&out.join("a.gci")).unwrap();
    assert!(marks.voiced().iter().filter(|&&v| v).count() > 100);
    let data = psgan_core::training::Dataset::load(&out).unwrap();
    assert_eq!(data.total_frames(), 300);
}

#[test]
fn glottal_target_refilters_to_speech() {
    let speech = vowel(110.0, 16000, 4);
    let a = analyze(&speech, detector().as_ref(), "v").unwrap();
    let glottal = target_modes().create("glottal", &()).unwrap();
    let residual = glottal.target(&speech, &a.features).unwrap();
    let back = glottal.render(residual.clone(), &a.features).unwrap();
    assert!(snr_db(&speech.samples, &back.samples) > 30.0);
    // The residual is whiter than the speech it came from.
    let flatness = |x: &[f64]| {
        let m = magnitude_spectrum(&x[4000..4512]);
        let logs: f64 = m.iter().map(|v| (v * v + 1e-20).ln()).sum::<f64>() / m.len() as f64;
        logs.exp() / (m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64)
    };
    assert!(flatness(&residual.samples) > 2.0 * flatness(&speech.samples));

    let speech_mode = target_modes().create("speech", &()).unwrap();
    let raw = speech_mode.target(&speech, &a.features).unwrap();
    let frames = acoustic_frame_targets(&raw, &a.marks, a.features.len()).unwrap();
    let direct = acoustic_frame_targets(&speech, &a.marks, a.features.len()).unwrap();
    assert_eq!(frames, direct);
}

#[test]
fn synthesis_length_peak_and_mode_check() {
    let speech = vowel(100.0, 4000, 5);
    let a = analyze(&speech, detector().as_ref(), "v").unwrap();
    let ck = small_checkpoint("glottal");
    let glottal = target_modes().create("glottal", &()).unwrap();
    let y = synthesize(&a.features, &ck, glottal.as_ref(), &SynthesisOptions::default()).unwrap();
    assert_eq!(y.len(), a.features.len() * HOP);
    let peak = y.samples.iter().fold(0f64, |m, v| m.max(v.abs()));
    assert!((peak - 0.89).abs() < 1e-12, "{peak}");

    let again = synthesize(&a.features, &ck, glottal.as_ref(), &SynthesisOptions::default()).unwrap();
    assert_eq!(y, again);

    let speech_mode = target_modes().create("speech", &()).unwrap();
    assert!(matches!(synthesize(&a.features, &ck, speech_mode.as_ref(), &SynthesisOptions::default()), Err(Error::Invalid(_))));
}

#[test]
fn windowed_inference_matches_single_pass() {
    let speech = vowel(125.0, 320 * HOP, 6);
    let a = analyze(&speech, detector().as_ref(), "v").unwrap();
    let ck = small_checkpoint("glottal");
    let noise = NoiseBundle::sample(&mut ChaCha8Rng::seed_from_u64(9), 1, a.features.len());
    let windowed = generate_frames(&ck.nets, &ck.stats, &a.features, &noise, WINDOW_FRAMES, CONTEXT_FRAMES).unwrap();
    let whole = generate_frames(&ck.nets, &ck.stats, &a.features, &noise, a.features.len() + 2 * CONTEXT_FRAMES, CONTEXT_FRAMES).unwrap();
    assert_eq!(windowed.len(), 320);
    let worst = windowed.iter().flatten().zip(whole.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn silent_and_noisy_input_synthesise_finite_audio() {
    let ck = small_checkpoint("speech");
    let mode = target_modes().create("speech", &()).unwrap();
    let silence = Signal::from_samples(vec![0.0; 3200]).unwrap();
    let a = analyze(&silence, detector().as_ref(), "s").unwrap();
    let y = synthesize(&a.features, &ck, mode.as_ref(), &SynthesisOptions::default()).unwrap();
    assert!(y.samples.iter().all(|v| v.is_finite() && v.abs() <= 0.89));
}

#[test]
fn evaluate_dirs_requires_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let (r, s) = (dir.path().join("ref"), dir.path().join("syn"));
    fs::create_dir(&r).unwrap();
    fs::create_dir(&s).unwrap();
    let x = vowel(100.0, 8000, 7);
    write_wav(&r.join("u.wav"), &x).unwrap();
    write_wav(&s.join("u.wav"), &x).unwrap();
    let report = evaluate_dirs(&r, &s).unwrap();
    assert_eq!(report.utterances.len(), 1);
    assert_eq!(report.lsd_db, 0.0);
    assert_eq!(report.utterances[0].name, "u");
    write_wav(&r.join("extra.wav"), &x).unwrap();
    assert!(evaluate_dirs(&r, &s).is_err());
}

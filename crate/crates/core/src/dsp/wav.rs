//! 16-bit PCM mono 16 kHz WAV input and output.

use std::path::Path;

use super::{Signal, SAMPLE_RATE};
use crate::{Error, Result};

pub fn read_wav(path: &Path) -> Result<Signal> {
    let audio_err = |msg: String| Error::Audio { path: path.to_owned(), msg };
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(audio_err(format!("{} Hz, expected {SAMPLE_RATE} Hz", spec.sample_rate)));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(audio_err(format!("{}-bit {:?}, expected 16-bit PCM", spec.bits_per_sample, spec.sample_format)));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| audio_err(e.to_string()))?;
    Signal::new(samples, SAMPLE_RATE)
}

/// Writes with saturation to the 16-bit range.
pub fn write_wav(path: &Path, signal: &Signal) -> Result<()> {
    let audio_err = |e: hound::Error| Error::Audio { path: path.to_owned(), msg: e.to_string() };
    if signal.sample_rate != SAMPLE_RATE {
        return Err(Error::Audio { path: path.to_owned(), msg: format!("{} Hz output unsupported", signal.sample_rate) });
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(audio_err)?;
    for &v in &signal.samples {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(audio_err)?;
    }
    w.finalize().map_err(audio_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_format_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let s = Signal::from_samples(vec![0.0, 0.5, -0.25, 1.5, -2.0]).unwrap();
        write_wav(&p, &s).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.samples[..3], [0.0, 0.5, -0.25]);
        assert_eq!(back.samples[3], 32767.0 / 32768.0);
        assert_eq!(back.samples[4], -1.0);

        let stereo = dir.path().join("b.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&stereo), Err(Error::Audio { .. })));

        let fast = dir.path().join("c.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 44100, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        hound::WavWriter::create(&fast, spec).unwrap().finalize().unwrap();
        assert!(read_wav(&fast).is_err());
    }
}

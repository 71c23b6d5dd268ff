use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::{analyze, TargetMode};
use crate::dsp::wav::read_wav;
use crate::dsp::{acoustic_frame_targets, write_mark_file, F0Track, GciDetector};
use crate::error::io_err;
use crate::features::write_features;
use crate::training::{encode_pyramids, Utterance, MANIFEST};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PrepareSummary {
    pub prepared: Vec<String>,
    /// File name and reason for every input that was left out.
    pub skipped: Vec<(PathBuf, String)>,
}

/// One F0 value per line in Hz, 0 for unvoiced frames.
pub fn write_f0_file(path: &Path, f0: &F0Track) -> Result<()> {
    let text: String = f0.raw().iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, text).map_err(io_err(path))
}

/// Analyses every `.wav` in `wav_dir` (sorted by name) and writes, per
/// utterance, `<name>.f0`, `<name>.gci`, `<name>.psgf` and `<name>.psgp`,
/// plus a manifest listing the prepared names. Unreadable or unusable audio
/// is skipped with a warning.
pub fn prepare_dataset(wav_dir: &Path, out_dir: &Path, mode: &dyn TargetMode, detector: &dyn GciDetector) -> Result<PrepareSummary> {
    let mut inputs: Vec<PathBuf> = fs::read_dir(wav_dir)
        .map_err(io_err(wav_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    inputs.sort();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut summary = PrepareSummary::default();
    for path in inputs {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        match prepare_one(&path, &name, out_dir, mode, detector) {
            Ok(frames) => {
                info!("{name}: {frames} frames");
                summary.prepared.push(name);
            }
            Err(e @ (Error::Audio { .. } | Error::Invalid(_) | Error::Format { .. })) => {
                warn!("skipping {}: {e}", path.display());
                summary.skipped.push((path, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let manifest = out_dir.join(MANIFEST);
    let text: String = summary.prepared.iter().map(|n| format!("{n}\n")).collect();
    fs::write(&manifest, text).map_err(io_err(&manifest))?;
    Ok(summary)
}

fn prepare_one(path: &Path, name: &str, out_dir: &Path, mode: &dyn TargetMode, detector: &dyn GciDetector) -> Result<usize> {
    let speech = read_wav(path)?;
    let a = analyze(&speech, detector, name)?;
    let target = mode.target(&speech, &a.features)?;
    let frames = acoustic_frame_targets(&target, &a.marks, a.features.len())?;
    let utt = Utterance::from_frames(a.features, &frames)?;
    write_f0_file(&out_dir.join(format!("{name}.f0")), &a.f0)?;
    write_mark_file(&out_dir.join(format!("{name}.gci")), &a.marks)?;
    write_features(&out_dir.join(format!("{name}.psgf")), &utt.features)?;
    let pyr = out_dir.join(format!("{name}.psgp"));
    fs::write(&pyr, encode_pyramids(&utt.pyramids)).map_err(io_err(&pyr))?;
    Ok(utt.len())
}

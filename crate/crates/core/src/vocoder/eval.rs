use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::dsp::wav::read_wav;
use crate::dsp::{estimate_f0, hann, magnitude_spectrum, Signal, FRAME_LEN, HOP};
use crate::error::io_err;
use crate::{Error, Result};

const LSD_WINDOW: usize = 400;
const LSD_FLOOR_DB: f64 = -100.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtteranceScores {
    pub name: String,
    pub frames: usize,
    /// Log-spectral distance in dB.
    pub lsd_db: f64,
    /// F0 error over frames both signals call voiced; 0 when there are none.
    pub f0_rmse_hz: f64,
    pub voiced_both: usize,
    /// Percentage of frames whose voicing decisions disagree.
    pub voicing_error_pct: f64,
}

/// Per-utterance scores and frame-weighted aggregates.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub utterances: Vec<UtteranceScores>,
    pub lsd_db: f64,
    pub f0_rmse_hz: f64,
    pub voicing_error_pct: f64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("utterance,frames,lsd_db,f0_rmse_hz,voicing_error_pct\n");
        for u in &self.utterances {
            s += &format!("{},{},{},{},{}\n", u.name, u.frames, u.lsd_db, u.f0_rmse_hz, u.voicing_error_pct);
        }
        let frames: usize = self.utterances.iter().map(|u| u.frames).sum();
        s += &format!("ALL,{frames},{},{},{}\n", self.lsd_db, self.f0_rmse_hz, self.voicing_error_pct);
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} utterances: LSD {:.3} dB, F0 RMSE {:.3} Hz, voicing error {:.2} %",
            self.utterances.len(),
            self.lsd_db,
            self.f0_rmse_hz,
            self.voicing_error_pct
        )
    }
}

fn log_spectra(x: &[f64], frames: usize, win: &[f64]) -> Vec<Vec<f64>> {
    (0..frames)
        .map(|f| {
            let start = (f * HOP + HOP / 2) as isize - (LSD_WINDOW / 2) as isize;
            let mut buf = vec![0.0; FRAME_LEN];
            for (k, w) in win.iter().enumerate() {
                let i = start + k as isize;
                if i >= 0 && (i as usize) < x.len() {
                    buf[k] = x[i as usize] * w;
                }
            }
            magnitude_spectrum(&buf).iter().map(|&m| (20.0 * m.log10()).max(LSD_FLOOR_DB)).collect()
        })
        .collect()
}

/// Compares a synthesised signal with its reference over the shorter of
/// the two durations.
pub fn evaluate_pair(name: &str, reference: &Signal, synthesized: &Signal) -> UtteranceScores {
    let len = reference.len().min(synthesized.len());
    let r = Signal { samples: reference.samples[..len].to_vec(), sample_rate: reference.sample_rate };
    let s = Signal { samples: synthesized.samples[..len].to_vec(), sample_rate: synthesized.sample_rate };
    let frames = r.frame_count();
    let win = hann(LSD_WINDOW);
    let (lr, ls) = (log_spectra(&r.samples, frames, &win), log_spectra(&s.samples, frames, &win));
    let lsd_sum: f64 = lr
        .iter()
        .zip(&ls)
        .map(|(a, b)| (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
        .sum();
    let (fr, fs) = (estimate_f0(&r), estimate_f0(&s));
    let mut sq = 0.0;
    let mut both = 0;
    let mut disagree = 0;
    for f in 0..frames {
        if fr.voiced[f] != fs.voiced[f] {
            disagree += 1;
        } else if fr.voiced[f] {
            sq += (fr.hz[f] - fs.hz[f]).powi(2);
            both += 1;
        }
    }
    let per = |v: f64, n: usize| if n == 0 { 0.0 } else { v / n as f64 };
    UtteranceScores {
        name: name.to_owned(),
        frames,
        lsd_db: per(lsd_sum, frames),
        f0_rmse_hz: per(sq, both).sqrt(),
        voiced_both: both,
        voicing_error_pct: 100.0 * per(disagree as f64, frames),
    }
}

/// Scores `(name, reference, synthesised)` triples.
pub fn evaluate(pairs: &[(String, Signal, Signal)]) -> EvalReport {
    let utterances: Vec<UtteranceScores> = pairs.iter().map(|(n, r, s)| evaluate_pair(n, r, s)).collect();
    let frames: usize = utterances.iter().map(|u| u.frames).sum();
    let both: usize = utterances.iter().map(|u| u.voiced_both).sum();
    let weighted = |g: fn(&UtteranceScores) -> f64| utterances.iter().map(|u| g(u) * u.frames as f64).sum::<f64>();
    let per = |v: f64, n: usize| if n == 0 { 0.0 } else { v / n as f64 };
    let f0_sq: f64 = utterances.iter().map(|u| u.f0_rmse_hz.powi(2) * u.voiced_both as f64).sum();
    EvalReport {
        lsd_db: per(weighted(|u| u.lsd_db), frames),
        f0_rmse_hz: per(f0_sq, both).sqrt(),
        voicing_error_pct: per(weighted(|u| u.voicing_error_pct), frames),
        utterances,
    }
}

fn wav_names(dir: &Path) -> Result<BTreeSet<String>> {
    Ok(std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_owned))
        .collect())
}

/// Pairs WAV files by name across two directories.
pub fn evaluate_dirs(reference_dir: &Path, synthesized_dir: &Path) -> Result<EvalReport> {
    let refs = wav_names(reference_dir)?;
    let syns = wav_names(synthesized_dir)?;
    if refs != syns {
        let unpaired: Vec<&String> = refs.symmetric_difference(&syns).collect();
        return Err(Error::Invalid(format!("unpaired files: {unpaired:?}")));
    }
    let mut pairs = Vec::with_capacity(refs.len());
    for name in refs {
        let r = read_wav(&reference_dir.join(&name))?;
        let s = read_wav(&synthesized_dir.join(&name))?;
        let stem = name.rsplit_once('.').map_or(name.as_str(), |(s, _)| s).to_owned();
        pairs.push((stem, r, s));
    }
    Ok(evaluate(&pairs))
}

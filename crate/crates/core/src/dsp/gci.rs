use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{lpc_residual_track, F0Track, Signal, HOP};
use crate::error::io_err;
use crate::registry::Registry;
use crate::{Error, Result};

/// Glottal closure instants (voiced) and fixed-hop pseudo-marks (unvoiced).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GciMarks {
    positions: Vec<usize>,
    voiced: Vec<bool>,
}

impl GciMarks {
    pub fn new(positions: Vec<usize>, voiced: Vec<bool>) -> Result<Self> {
        if positions.len() != voiced.len() {
            return Err(Error::Invalid("one voicing flag per mark required".into()));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("marks must be strictly increasing".into()));
        }
        Ok(Self { positions, voiced })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Index of the mark closest to `sample` (ties go to the earlier mark).
    pub fn nearest(&self, sample: usize) -> Option<usize> {
        if self.positions.is_empty() {
            return None;
        }
        let i = self.positions.partition_point(|&p| p < sample);
        if i == 0 {
            return Some(0);
        }
        if i == self.positions.len() {
            return Some(i - 1);
        }
        let (lo, hi) = (self.positions[i - 1], self.positions[i]);
        Some(if sample - lo <= hi - sample { i - 1 } else { i })
    }

    pub fn check_bounds(&self, len: usize) -> Result<()> {
        match self.positions.last() {
            Some(&p) if p >= len => Err(Error::Invalid(format!("mark {p} outside signal of {len} samples"))),
            _ => Ok(()),
        }
    }
}

pub const F0_MIN: f64 = 50.0;
pub const F0_MAX: f64 = 500.0;

/// Unvoiced pseudo-marks every 80 samples.
pub fn unvoiced_marks(len: usize) -> GciMarks {
    let positions: Vec<usize> = (0..len).step_by(HOP).collect();
    let n = positions.len();
    GciMarks { positions, voiced: vec![false; n] }
}

/// Picks the most negative LP-residual sample inside a one-period search
/// window around each expected GCI. Unvoiced stretches get pseudo-marks
/// every 80 samples.
pub fn detect_gci(signal: &Signal, f0: &F0Track) -> Result<GciMarks> {
    if signal.is_empty() {
        return Err(Error::Invalid("cannot mark an empty signal".into()));
    }
    let (_, residual) = lpc_residual_track(signal, 18)?;
    let e = &residual.samples;
    let n = e.len();
    let frames = f0.len();
    let mut clamped = 0usize;
    let mut period_at = |pos: usize| -> Option<usize> {
        let f = (pos / HOP).min(frames.saturating_sub(1));
        if frames == 0 || !f0.voiced[f] {
            return None;
        }
        let hz = f0.hz[f];
        if !(F0_MIN..=F0_MAX).contains(&hz) {
            clamped += 1;
        }
        Some((signal.sample_rate as f64 / hz.clamp(F0_MIN, F0_MAX)).round() as usize)
    };
    let mut positions = Vec::new();
    let mut voiced = Vec::new();
    let mut last: Option<usize> = None;
    loop {
        let probe = last.map_or(0, |l| l + 1);
        if probe >= n {
            break;
        }
        match period_at(probe) {
            Some(t) => {
                let (lo, hi) = match last {
                    Some(l) => (l + t - t / 2, l + t + t.div_ceil(2)),
                    None => (0, t),
                };
                let lo = lo.max(probe);
                if lo >= n {
                    break;
                }
                let hi = hi.min(n);
                let m = (lo..hi).min_by(|&a, &b| e[a].partial_cmp(&e[b]).unwrap()).unwrap();
                positions.push(m);
                voiced.push(true);
                last = Some(m);
            }
            None => {
                let m = last.map_or(0, |l| l + HOP);
                if m >= n {
                    break;
                }
                positions.push(m);
                voiced.push(false);
                last = Some(m);
            }
        }
    }
    if clamped > 0 {
        warn!("{clamped} F0 values outside [{F0_MIN}, {F0_MAX}] Hz were clamped");
    }
    GciMarks::new(positions, voiced)
}

/// Writes `sample_index voiced_flag` lines.
pub fn write_mark_file(path: &Path, marks: &GciMarks) -> Result<()> {
    let mut text = String::with_capacity(marks.len() * 10);
    for (p, v) in marks.positions.iter().zip(&marks.voiced) {
        text.push_str(&format!("{p} {}\n", u8::from(*v)));
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_mark_file(path: &Path) -> Result<GciMarks> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, msg: &str| Error::Format { path: path.to_owned(), msg: format!("line {line}: {msg}") };
    let mut positions = Vec::new();
    let mut voiced = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let pos = parts.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| bad(i + 1, "bad sample index"))?;
        let flag = match parts.next() {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(bad(i + 1, "voicing flag must be 0 or 1")),
        };
        if parts.next().is_some() {
            return Err(bad(i + 1, "trailing fields"));
        }
        positions.push(pos);
        voiced.push(flag);
    }
    GciMarks::new(positions, voiced).map_err(|e| Error::Format { path: path.to_owned(), msg: e.to_string() })
}

/// Source of GCI marks for an utterance.
pub trait GciDetector {
    fn name(&self) -> &str;
    fn detect(&self, signal: &Signal, f0: &F0Track, utterance: &str) -> Result<GciMarks>;
}

pub struct ResidualPeakDetector;

impl GciDetector for ResidualPeakDetector {
    fn name(&self) -> &str {
        "lp-residual"
    }

    fn detect(&self, signal: &Signal, f0: &F0Track, _utterance: &str) -> Result<GciMarks> {
        detect_gci(signal, f0)
    }
}

/// Reads `<dir>/<utterance>.gci` produced by an external detector.
pub struct MarkFileDetector {
    pub dir: PathBuf,
}

impl GciDetector for MarkFileDetector {
    fn name(&self) -> &str {
        "mark-file"
    }

    fn detect(&self, signal: &Signal, _f0: &F0Track, utterance: &str) -> Result<GciMarks> {
        let marks = read_mark_file(&self.dir.join(format!("{utterance}.gci")))?;
        marks.check_bounds(signal.len())?;
        Ok(marks)
    }
}

/// Detector options passed to registry factories.
#[derive(Clone, Debug, Default)]
pub struct DetectorOptions {
    pub mark_dir: Option<PathBuf>,
}

pub fn gci_detectors() -> Registry<dyn GciDetector, DetectorOptions> {
    let mut r: Registry<dyn GciDetector, DetectorOptions> = Registry::new("GCI detector");
    r.register("lp-residual", |_| Ok(Box::new(ResidualPeakDetector)));
    r.register("mark-file", |o: &DetectorOptions| {
        let dir = o.mark_dir.clone().ok_or_else(|| Error::Config("mark-file detector needs `mark_dir`".into()))?;
        Ok(Box::new(MarkFileDetector { dir }))
    });
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_gets_fixed_hop_pseudo_marks() {
        let s = Signal::from_samples(vec![0.0; 800]).unwrap();
        let f0 = F0Track { hz: vec![100.0; 10], voiced: vec![false; 10] };
        let m = detect_gci(&s, &f0).unwrap();
        assert_eq!(m.positions(), &[0, 80, 160, 240, 320, 400, 480, 560, 640, 720]);
        assert!(m.voiced().iter().all(|v| !v));
        assert_eq!(m, unvoiced_marks(800));
    }

    #[test]
    fn impulse_train_marks() {
        let mut x = vec![0.0; 4000];
        let truth: Vec<usize> = (50..4000).step_by(160).collect();
        for &t in &truth {
            x[t] = -1.0;
        }
        let s = Signal::from_samples(x).unwrap();
        let frames = s.frame_count();
        let f0 = F0Track { hz: vec![100.0; frames], voiced: vec![true; frames] };
        let m = detect_gci(&s, &f0).unwrap();
        for &t in &truth {
            assert!(m.positions().iter().any(|&p| p.abs_diff(t) <= 1), "missing {t}: {:?}", m.positions());
        }
    }

    #[test]
    fn empty_signal_is_an_error() {
        let s = Signal::from_samples(vec![]).unwrap();
        assert!(detect_gci(&s, &F0Track { hz: vec![], voiced: vec![] }).is_err());
    }

    #[test]
    fn nearest_mark() {
        let m = GciMarks::new(vec![10, 20, 40], vec![true; 3]).unwrap();
        assert_eq!(m.nearest(0), Some(0));
        assert_eq!(m.nearest(15), Some(0));
        assert_eq!(m.nearest(16), Some(1));
        assert_eq!(m.nearest(100), Some(2));
        assert!(GciMarks::new(vec![3, 3], vec![true; 2]).is_err());
    }

    #[test]
    fn mark_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.gci");
        let m = GciMarks::new(vec![0, 80, 241], vec![false, true, true]).unwrap();
        write_mark_file(&p, &m).unwrap();
        assert_eq!(read_mark_file(&p).unwrap(), m);
        fs::write(&p, "5 1\n3 0\n").unwrap();
        assert!(matches!(read_mark_file(&p), Err(Error::Format { .. })));
        fs::write(&p, "5 2\n").unwrap();
        assert!(read_mark_file(&p).is_err());
    }

    #[test]
    fn registry_lookup() {
        let reg = gci_detectors();
        assert_eq!(reg.names(), vec!["lp-residual", "mark-file"]);
        assert!(reg.create("lp-residual", &DetectorOptions::default()).is_ok());
        assert!(reg.create("mark-file", &DetectorOptions::default()).is_err());
        assert!(matches!(reg.create("reaper", &DetectorOptions::default()), Err(Error::UnknownStrategy { .. })));
    }
}

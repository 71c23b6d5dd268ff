//! 47-dimensional acoustic conditioning features at a 200 Hz frame rate:
//! 30 vocal-tract LSFs, 10 source-envelope LSFs, 5 band HNRs, mel F0 and a
//! voicing flag.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dsp::{
    analyze_lpc, autocorrelation, filter_segment_inverse, hann, levinson, lpc_to_lsf, magnitude_spectrum, segment,
    GciMarks, LpcCoeffs, Lsf, Signal, HOP,
};
use crate::error::io_err;
use crate::{Error, Result};

pub const VT_ORDER: usize = 30;
pub const GLOT_ORDER: usize = 10;
pub const HNR_BANDS: usize = 5;
pub const DIM: usize = VT_ORDER + GLOT_ORDER + HNR_BANDS + 2;
pub const F0_INDEX: usize = VT_ORDER + GLOT_ORDER + HNR_BANDS;
pub const VOICING_INDEX: usize = F0_INDEX + 1;

const ANALYSIS_WINDOW: usize = 400;
const PRE_EMPHASIS: f64 = 0.97;
const HNR_EDGES: [f64; HNR_BANDS + 1] = [0.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
const HNR_PERIODS: usize = 3;
const HNR_LIMIT_DB: f64 = 60.0;
/// Fallback F0 for tracks with no voiced frame at all.
pub const DEFAULT_F0: f64 = 100.0;

pub fn hz_to_mel(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::Domain(format!("negative frequency {f}")));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Fills unvoiced (zero) frames by linear interpolation between voiced
/// neighbours, holding the nearest value at the ends.
pub fn interpolate_f0(raw: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let voiced: Vec<bool> = raw.iter().map(|&f| f > 0.0).collect();
    let idx: Vec<usize> = (0..raw.len()).filter(|&i| voiced[i]).collect();
    if idx.is_empty() {
        return (vec![DEFAULT_F0; raw.len()], voiced);
    }
    let mut out = raw.to_vec();
    let (first, last) = (idx[0], *idx.last().unwrap());
    out[..first].fill(raw[first]);
    out[last + 1..].fill(raw[last]);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            out[i] = raw[a] + t * (raw[b] - raw[a]);
        }
    }
    (out, voiced)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcousticFrame {
    pub vt_lsf: [f32; VT_ORDER],
    pub glot_lsf: [f32; GLOT_ORDER],
    pub hnr: [f32; HNR_BANDS],
    pub f0_mel: f32,
    pub voicing: f32,
}

impl AcousticFrame {
    pub fn to_vector(&self) -> [f32; DIM] {
        let mut v = [0.0; DIM];
        v[..VT_ORDER].copy_from_slice(&self.vt_lsf);
        v[VT_ORDER..VT_ORDER + GLOT_ORDER].copy_from_slice(&self.glot_lsf);
        v[VT_ORDER + GLOT_ORDER..F0_INDEX].copy_from_slice(&self.hnr);
        v[F0_INDEX] = self.f0_mel;
        v[VOICING_INDEX] = self.voicing;
        v
    }

    pub fn from_vector(v: &[f32]) -> Result<Self> {
        if v.len() != DIM {
            return Err(Error::Invalid(format!("feature vector has {} values, expected {DIM}", v.len())));
        }
        let frame = Self {
            vt_lsf: v[..VT_ORDER].try_into().unwrap(),
            glot_lsf: v[VT_ORDER..VT_ORDER + GLOT_ORDER].try_into().unwrap(),
            hnr: v[VT_ORDER + GLOT_ORDER..F0_INDEX].try_into().unwrap(),
            f0_mel: v[F0_INDEX],
            voicing: v[VOICING_INDEX],
        };
        Ok(frame)
    }

    /// Checks the LSF, F0 and voicing invariants.
    pub fn validate(&self) -> Result<()> {
        let mono = |x: &[f32]| x.windows(2).all(|w| w[0] < w[1]) && x.iter().all(|&w| w > 0.0 && (w as f64) < std::f64::consts::PI);
        if !mono(&self.vt_lsf) || !mono(&self.glot_lsf) {
            return Err(Error::Domain("LSF block not strictly increasing in (0, pi)".into()));
        }
        if !(self.f0_mel >= 0.0) {
            return Err(Error::Domain("negative mel F0".into()));
        }
        if self.voicing != 0.0 && self.voicing != 1.0 {
            return Err(Error::Domain("voicing flag must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn is_voiced(&self) -> bool {
        self.voicing > 0.5
    }

    pub fn f0_hz(&self) -> f64 {
        mel_to_hz(self.f0_mel as f64)
    }

    pub fn vt_lpc(&self) -> Result<LpcCoeffs> {
        crate::dsp::lsf_to_lpc(&Lsf::new(self.vt_lsf.iter().map(|&v| v as f64).collect())?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTrack {
    pub utterance: String,
    pub sample_count: usize,
    pub frames: Vec<AcousticFrame>,
}

impl FeatureTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame-major matrix of feature vectors.
    pub fn matrix(&self) -> Vec<[f32; DIM]> {
        self.frames.iter().map(AcousticFrame::to_vector).collect()
    }
}

// Rounds to f32 keeping the sequence strictly increasing.
fn lsf_to_f32<const N: usize>(lsf: &Lsf) -> [f32; N] {
    let mut out = [0f32; N];
    let mut prev = 0f32;
    for (o, &w) in out.iter_mut().zip(lsf.freqs()) {
        let mut v = w as f32;
        if v <= prev {
            v = f32::from_bits(prev.to_bits() + 1);
        }
        *o = v;
        prev = v;
    }
    out
}

fn lsf_or_uniform(lpc: &LpcCoeffs, order: usize) -> Lsf {
    lpc_to_lsf(lpc).unwrap_or_else(|_| Lsf::uniform(order))
}

/// Per-frame F0 implied by voiced mark spacing; 0 where unvoiced.
fn f0_from_marks(marks: &GciMarks, frames: usize, fs: f64) -> Vec<f64> {
    let pos = marks.positions();
    let voiced = marks.voiced();
    (0..frames)
        .map(|f| {
            let centre = f * HOP + HOP / 2;
            let Some(j) = marks.nearest(centre) else { return 0.0 };
            if !voiced[j] {
                return 0.0;
            }
            let mut spans = Vec::with_capacity(2);
            if j > 0 && voiced[j - 1] {
                spans.push((pos[j] - pos[j - 1]) as f64);
            }
            if j + 1 < pos.len() && voiced[j + 1] {
                spans.push((pos[j + 1] - pos[j]) as f64);
            }
            if spans.is_empty() {
                return 0.0;
            }
            fs / (spans.iter().sum::<f64>() / spans.len() as f64)
        })
        .collect()
}

/// Harmonic-to-noise ratios in five bands from comb averaging over three
/// pitch periods around `centre`.
fn band_hnr(x: &[f64], centre: usize, f0: f64, fs: f64) -> [f32; HNR_BANDS] {
    let period = (fs / f0).round().max(2.0) as usize;
    let start = centre as isize - (HNR_PERIODS * period / 2) as isize;
    let segs: Vec<Vec<f64>> =
        (0..HNR_PERIODS).map(|k| segment(x, start + (k * period) as isize, period)).collect();
    let mean: Vec<f64> = (0..period).map(|i| segs.iter().map(|s| s[i]).sum::<f64>() / HNR_PERIODS as f64).collect();
    let harmonic: Vec<f64> = (0..HNR_PERIODS).flat_map(|_| mean.iter().copied()).collect();
    let noise: Vec<f64> = segs.iter().flat_map(|s| s.iter().zip(&mean).map(|(a, m)| a - m)).collect();
    let hs = magnitude_spectrum(&harmonic);
    let ns = magnitude_spectrum(&noise);
    let bin_hz = fs / harmonic.len() as f64;
    let mut out = [0f32; HNR_BANDS];
    for (b, o) in out.iter_mut().enumerate() {
        let (lo, hi) = (HNR_EDGES[b], HNR_EDGES[b + 1]);
        let mut eh = 0.0;
        let mut en = 0.0;
        for k in 0..hs.len() {
            let f = k as f64 * bin_hz;
            if f >= lo && (f < hi || (b == HNR_BANDS - 1 && f <= hi)) {
                eh += hs[k] * hs[k];
                en += ns[k] * ns[k];
            }
        }
        let db = 10.0 * ((eh + 1e-10) / (en + 1e-10)).log10();
        *o = db.clamp(-HNR_LIMIT_DB, HNR_LIMIT_DB) as f32;
    }
    out
}

/// Frame-wise analysis: pre-emphasised order-30 LPC for the vocal tract,
/// order-10 LPC of the inverse-filtered (non-emphasised) signal for the
/// source envelope, comb-filter HNR, and F0/voicing from the marks.
pub fn extract_features(signal: &Signal, marks: &GciMarks, utterance: &str) -> Result<FeatureTrack> {
    if signal.len() < ANALYSIS_WINDOW {
        return Err(Error::Invalid(format!(
            "signal of {} samples is shorter than one {ANALYSIS_WINDOW}-sample analysis window",
            signal.len()
        )));
    }
    marks.check_bounds(signal.len())?;
    let x = &signal.samples;
    let fs = signal.sample_rate as f64;
    let emph: Vec<f64> = (0..x.len()).map(|n| x[n] - if n > 0 { PRE_EMPHASIS * x[n - 1] } else { 0.0 }).collect();
    let frames = signal.frame_count();
    let (f0, voiced) = interpolate_f0(&f0_from_marks(marks, frames, fs));
    let win = hann(ANALYSIS_WINDOW);
    let half = (ANALYSIS_WINDOW / 2) as isize;
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let centre = f * HOP + HOP / 2;
        let vt = analyze_lpc(&emph, centre as isize, &win, VT_ORDER);
        let vt_lsf = lsf_or_uniform(&vt, VT_ORDER);

        let residual = filter_segment_inverse(x, centre as isize - half, ANALYSIS_WINDOW, &vt);
        let windowed: Vec<f64> = residual.iter().zip(&win).map(|(r, w)| r * w).collect();
        let mut r = autocorrelation(&windowed, GLOT_ORDER);
        r[0] = r[0] * (1.0 + 1e-9) + 1e-10;
        let glot = levinson(&r, GLOT_ORDER).unwrap_or_else(|_| LpcCoeffs::identity(GLOT_ORDER));
        let glot_lsf = lsf_or_uniform(&glot, GLOT_ORDER);

        let frame = AcousticFrame {
            vt_lsf: lsf_to_f32(&vt_lsf),
            glot_lsf: lsf_to_f32(&glot_lsf),
            hnr: band_hnr(x, centre, f0[f], fs),
            f0_mel: hz_to_mel(f0[f])? as f32,
            voicing: if voiced[f] { 1.0 } else { 0.0 },
        };
        out.push(frame);
    }
    Ok(FeatureTrack { utterance: utterance.to_owned(), sample_count: signal.len(), frames: out })
}

const MAGIC: &[u8; 4] = b"PSGF";
const VERSION: u32 = 1;

/// Little-endian binary: magic, version, frame count, dimension, then
/// frame-major f32 payload.
pub fn encode_features(track: &FeatureTrack) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + track.len() * DIM * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(track.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(DIM as u32).to_le_bytes());
    for v in track.matrix() {
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<FeatureTrack> {
    let bad = |msg: String| Error::Format { path: path.to_owned(), msg };
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (version, count, dim) = (word(4), word(8) as usize, word(12) as usize);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    if dim != DIM {
        return Err(bad(format!("dimension {dim}, expected {DIM}")));
    }
    let payload = &bytes[16..];
    if payload.len() != count * DIM * 4 {
        return Err(bad(format!("payload of {} bytes for {count} frames", payload.len())));
    }
    let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let frames = values.chunks_exact(DIM).map(AcousticFrame::from_vector).collect::<Result<Vec<_>>>()?;
    let utterance = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(FeatureTrack { utterance, sample_count: count * HOP, frames })
}

pub fn write_features(path: &Path, track: &FeatureTrack) -> Result<()> {
    fs::write(path, encode_features(track)).map_err(io_err(path))
}

pub fn read_features(path: &Path) -> Result<FeatureTrack> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_features(&bytes, path)
}

/// Debug export: header row plus one row per frame.
pub fn write_features_csv(path: &Path, track: &FeatureTrack) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    let mut header: Vec<String> = (0..VT_ORDER).map(|i| format!("vt_lsf{i}")).collect();
    header.extend((0..GLOT_ORDER).map(|i| format!("glot_lsf{i}")));
    header.extend((0..HNR_BANDS).map(|i| format!("hnr{i}")));
    header.push("f0_mel".into());
    header.push("voicing".into());
    writeln!(f, "{}", header.join(",")).map_err(io_err(path))?;
    for v in track.matrix() {
        let row: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        writeln!(f, "{}", row.join(",")).map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

/// Per-dimension z-score statistics over a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureStats {
    pub fn identity() -> Self {
        Self { mean: vec![0.0; DIM], std: vec![1.0; DIM] }
    }

    pub fn compute<'a>(tracks: impl IntoIterator<Item = &'a FeatureTrack>) -> Self {
        let mut sum = [0f64; DIM];
        let mut sq = [0f64; DIM];
        let mut n = 0usize;
        for t in tracks {
            for v in t.matrix() {
                for d in 0..DIM {
                    sum[d] += v[d] as f64;
                    sq[d] += (v[d] as f64).powi(2);
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std: Vec<f32> = (0..DIM)
            .map(|d| {
                let var = (sq[d] / n as f64 - mean[d] * mean[d]).max(0.0);
                // Constant dimensions pass through unscaled.
                if var.sqrt() < 1e-6 {
                    1.0
                } else {
                    var.sqrt() as f32
                }
            })
            .collect();
        Self { mean: mean.iter().map(|&m| m as f32).collect(), std }
    }

    pub fn normalize(&self, v: &[f32; DIM]) -> [f32; DIM] {
        let mut out = [0f32; DIM];
        for d in 0..DIM {
            out[d] = (v[d] - self.mean[d]) / self.std[d];
        }
        out
    }
}

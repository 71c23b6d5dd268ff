//! Prepared training data: per-utterance features aligned with one
//! GCI-centred target frame per acoustic frame.

use std::fs;
use std::path::Path;

use psgan_nn::Tensor;
use rand::Rng;

use crate::dsp::{build_pyramid, LEVELS};
use crate::error::io_err;
use crate::features::{read_features, FeatureStats, FeatureTrack, DIM};
use crate::model::level_len;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.txt";
const PYRAMID_MAGIC: &[u8; 4] = b"PSGP";
const PYRAMID_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub name: String,
    pub features: FeatureTrack,
    /// `pyramids[f][level]` for acoustic frame `f`.
    pub pyramids: Vec<Vec<Vec<f32>>>,
}

impl Utterance {
    /// Builds pyramids from full-resolution target frames.
    pub fn from_frames(features: FeatureTrack, frames: &[Vec<f64>]) -> Result<Self> {
        if frames.len() != features.len() {
            return Err(Error::Invalid(format!(
                "{} target frames for {} feature frames",
                frames.len(),
                features.len()
            )));
        }
        let pyramids = frames
            .iter()
            .map(|f| {
                let p = build_pyramid(f)?;
                Ok(p.levels().iter().map(|l| l.iter().map(|&v| v as f32).collect()).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { name: features.utterance.clone(), features, pyramids })
    }

    pub fn len(&self) -> usize {
        self.pyramids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pyramids.is_empty()
    }
}

pub fn encode_pyramids(pyramids: &[Vec<Vec<f32>>]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PYRAMID_MAGIC);
    for v in [PYRAMID_VERSION, pyramids.len() as u32, LEVELS as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for p in pyramids {
        for v in p.iter().flatten() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_pyramids(bytes: &[u8], path: &Path) -> Result<Vec<Vec<Vec<f32>>>> {
    let bad = |msg: &str| Error::Format { path: path.to_owned(), msg: msg.to_owned() };
    if bytes.len() < 16 || &bytes[..4] != PYRAMID_MAGIC {
        return Err(bad("not a pyramid file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    if word(4) != PYRAMID_VERSION as usize || word(12) != LEVELS {
        return Err(bad("unsupported version or level count"));
    }
    let per_frame: usize = (0..LEVELS).map(level_len).sum();
    let count = word(8);
    if bytes.len() != 16 + count * per_frame * 4 {
        return Err(bad("payload size mismatch"));
    }
    let values: Vec<f32> = bytes[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(values
        .chunks_exact(per_frame)
        .map(|frame| {
            let mut start = 0;
            (0..LEVELS)
                .map(|l| {
                    let s = &frame[start..start + level_len(l)];
                    start += level_len(l);
                    s.to_vec()
                })
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    /// Reads every utterance listed in the directory's manifest.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
        let mut utterances = Vec::new();
        for name in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let features = read_features(&dir.join(format!("{name}.psgf")))?;
            let pyr_path = dir.join(format!("{name}.psgp"));
            let bytes = fs::read(&pyr_path).map_err(io_err(&pyr_path))?;
            let pyramids = decode_pyramids(&bytes, &pyr_path)?;
            if pyramids.len() != features.len() {
                return Err(Error::Format { path: pyr_path, msg: "frame count differs from features".into() });
            }
            utterances.push(Utterance { name: name.to_owned(), features, pyramids });
        }
        Ok(Self { utterances })
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::len).sum()
    }

    pub fn stats(&self) -> FeatureStats {
        FeatureStats::compute(self.utterances.iter().map(|u| &u.features))
    }

    /// Draws `batch` random windows of `frames` consecutive frames.
    pub fn sample_batch<R: Rng>(&self, rng: &mut R, stats: &FeatureStats, batch: usize, frames: usize) -> Result<TrainBatch> {
        let windows: Vec<usize> = self.utterances.iter().map(|u| (u.len() + 1).saturating_sub(frames)).collect();
        let total: usize = windows.iter().sum();
        if total == 0 {
            return Err(Error::Invalid(format!("no utterance has {frames} frames")));
        }
        let picks: Vec<(usize, usize)> = (0..batch)
            .map(|_| {
                let mut k = rng.random_range(0..total);
                let mut u = 0;
                while k >= windows[u] {
                    k -= windows[u];
                    u += 1;
                }
                (u, k)
            })
            .collect();
        Ok(self.window(&picks, stats, frames))
    }

    /// Assembles the batch for explicit `(utterance, start frame)` picks.
    pub fn window(&self, picks: &[(usize, usize)], stats: &FeatureStats, frames: usize) -> TrainBatch {
        let b = picks.len();
        let mut features = Tensor::zeros([b, DIM, frames, 1]);
        let mut levels: Vec<Tensor<f32>> = (0..LEVELS).map(|l| Tensor::zeros([b, 1, frames, level_len(l)])).collect();
        for (i, &(u, start)) in picks.iter().enumerate() {
            let utt = &self.utterances[u];
            for f in 0..frames {
                let v = stats.normalize(&utt.features.frames[start + f].to_vector());
                for (d, &x) in v.iter().enumerate() {
                    let idx = features.index([i, d, f, 0]);
                    features.data_mut()[idx] = x;
                }
                for (l, t) in levels.iter_mut().enumerate() {
                    let idx = t.index([i, 0, f, 0]);
                    t.data_mut()[idx..idx + level_len(l)].copy_from_slice(&utt.pyramids[start + f][l]);
                }
            }
        }
        TrainBatch { features, real: levels }
    }
}

/// Normalised features `(B, 47, F, 1)` and the real pyramid, level 0 first.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    pub features: Tensor<f32>,
    pub real: Vec<Tensor<f32>>,
}

impl TrainBatch {
    pub fn batch(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.features.shape()[2]
    }
}

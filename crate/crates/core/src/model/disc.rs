use psgan_nn::ops::batch_stddev_feature;
use psgan_nn::{ConvGeom, Scalar, Var};

use super::{level_len, ArchConfig, Bound, CondPyramid, DISC_BLOCKS};
use crate::dsp::LEVELS;
use crate::{Error, Result};

/// Critic score of shape `(B, 1, 1, 1)` for a waveform pyramid.
///
/// Each block halves the sample axis with a strided gated convolution; the
/// first five also see the matching signal scale and conditioning.
pub fn discriminate<'g, T: Scalar>(
    arch: &ArchConfig,
    p: &Bound<'g, T>,
    x: &[Var<'g, T>],
    cond: &CondPyramid<'g, T>,
) -> Result<Var<'g, T>> {
    if x.len() != LEVELS {
        return Err(Error::Invalid(format!("critic needs {LEVELS} scales, got {}", x.len())));
    }
    let graph = x[0].graph();
    let [b, _, f, _] = x[0].shape();
    for (i, v) in x.iter().enumerate() {
        if v.shape() != [b, 1, f, level_len(i)] {
            return Err(Error::Invalid(format!("scale {i} has shape {:?}", v.shape())));
        }
    }
    let d = arch.disc_channels;
    let geom = ConvGeom::strided(arch.kernel_frames, arch.kernel_samples, 2);
    let mut h: Option<Var<'g, T>> = None;
    for k in 0..DISC_BLOCKS {
        let mut parts: Vec<Var<'g, T>> = h.into_iter().collect();
        if k < LEVELS {
            parts.push(x[k]);
            parts.push(cond.level(k, level_len(k))?);
        }
        let mut input = if parts.len() == 1 { parts[0] } else { graph.concat(&parts)? };
        if k == DISC_BLOCKS - 1 {
            input = batch_stddev_feature(input)?;
        }
        let a = p.conv(&format!("disc.block{k}"), input, geom)?;
        h = Some(a.slice_channels(0, d)?.gated(a.slice_channels(d, d)?)?);
    }
    let out = p.conv("disc.head", h.expect("non-empty critic"), ConvGeom::pointwise())?;
    let inv_f = T::one() / T::from_usize(f).expect("frame count");
    Ok(out.reduce_to([b, 1, 1, 1])?.scale(inv_f))
}

use psgan_nn::{ConvGeom, Scalar, Var};

use super::{ArchConfig, Bound, DILATIONS};
use crate::dsp::LEVELS;
use crate::features::DIM;
use crate::{Error, Result};

/// Per-scale conditioning, one vector per frame and scale. The sample axis
/// is filled by broadcasting.
pub struct CondPyramid<'g, T> {
    compact: Vec<Var<'g, T>>,
}

impl<'g, T: Scalar> CondPyramid<'g, T> {
    pub fn from_compact(compact: Vec<Var<'g, T>>) -> Self {
        Self { compact }
    }

    /// Head output of level `i`, shape `(B, cond_out, F, 1)`.
    pub fn compact(&self, i: usize) -> Var<'g, T> {
        self.compact[i]
    }

    /// Level `i` broadcast to `len` samples.
    pub fn level(&self, i: usize, len: usize) -> Result<Var<'g, T>> {
        let [b, c, f, _] = self.compact[i].shape();
        Ok(self.compact[i].broadcast_to([b, c, f, len])?)
    }

    /// Copies the values into fresh leaves of the same graph, cutting
    /// gradient flow.
    pub fn detached(&self) -> Self {
        let compact = self.compact.iter().map(|v| v.graph().leaf((*v.value()).clone())).collect();
        Self { compact }
    }
}

/// Runs the conditioning stack over normalised features of shape
/// `(B, 47, F, 1)`.
pub fn conditioning<'g, T: Scalar>(
    arch: &ArchConfig,
    p: &Bound<'g, T>,
    features: Var<'g, T>,
) -> Result<CondPyramid<'g, T>> {
    let [_, dim, _, len] = features.shape();
    if dim != DIM || len != 1 {
        return Err(Error::Invalid(format!("conditioning input has {dim} channels x {len} samples, expected {DIM} x 1")));
    }
    let r = arch.cond_channels;
    let pw = ConvGeom::pointwise();
    let mut h = p.conv("cond.in", features, pw)?;
    let mut skip: Option<Var<'g, T>> = None;
    for (k, &d) in DILATIONS.iter().enumerate() {
        let a = p.conv(&format!("cond.block{k}.filter"), h, ConvGeom::dilated_frames(3, d))?;
        let g = a.slice_channels(0, r)?.gated(a.slice_channels(r, r)?)?;
        if k + 1 < DILATIONS.len() {
            h = h.add(p.conv(&format!("cond.block{k}.res"), g, pw)?)?;
        }
        let s = p.conv(&format!("cond.block{k}.skip"), g, pw)?;
        skip = Some(match skip {
            Some(acc) => acc.add(s)?,
            None => s,
        });
    }
    let post = p.conv("cond.post", skip.expect("non-empty stack").relu(), pw)?;
    let compact = (0..LEVELS).map(|i| p.conv(&format!("cond.head{i}"), post, pw)).collect::<Result<_>>()?;
    Ok(CondPyramid { compact })
}

use psgan_nn::ops::upsample_linear;
use psgan_nn::{ConvGeom, Scalar, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{level_len, ArchConfig, Bound, CondPyramid, SEED_LEN};
use crate::dsp::LEVELS;
use crate::{Error, Result};

/// Unit Gaussian inputs: one seed channel and one channel per block.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBundle<T> {
    pub seed: Tensor<T>,
    /// `blocks[j]` has the output length of generator block `j`.
    pub blocks: Vec<Tensor<T>>,
}

impl<T: Scalar> NoiseBundle<T> {
    pub fn sample<R: Rng>(rng: &mut R, batch: usize, frames: usize) -> Self {
        let mut draw = |len: usize| {
            Tensor::from_fn([batch, 1, frames, len], |_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z)
            })
        };
        let seed = draw(SEED_LEN);
        let blocks = (0..LEVELS).map(|j| draw(level_len(LEVELS - 1 - j))).collect();
        Self { seed, blocks }
    }

    pub fn zeros(batch: usize, frames: usize) -> Self {
        Self {
            seed: Tensor::zeros([batch, 1, frames, SEED_LEN]),
            blocks: (0..LEVELS).map(|j| Tensor::zeros([batch, 1, frames, level_len(LEVELS - 1 - j)])).collect(),
        }
    }

    /// Frames `start .. start + len` of every tensor.
    pub fn frames(&self, start: usize, len: usize) -> Self {
        Self { seed: self.seed.frames(start, len), blocks: self.blocks.iter().map(|t| t.frames(start, len)).collect() }
    }
}

/// Runs the generator; returns the pyramid with level 0 at full resolution.
pub fn generate<'g, T: Scalar>(
    arch: &ArchConfig,
    p: &Bound<'g, T>,
    cond: &CondPyramid<'g, T>,
    noise: &NoiseBundle<T>,
) -> Result<Vec<Var<'g, T>>> {
    let graph = cond.compact(0).graph();
    let [b, _, f, _] = cond.compact(0).shape();
    if noise.seed.shape() != [b, 1, f, SEED_LEN] {
        return Err(Error::Invalid(format!("noise seed shape {:?} does not match {b} x {f} frames", noise.seed.shape())));
    }
    let c = arch.gen_channels;
    let pw = ConvGeom::pointwise();
    let seed_in = graph.concat(&[cond.level(LEVELS - 1, SEED_LEN)?, graph.leaf(noise.seed.clone())])?;
    // Learned per-sample offsets give the frame interior a sense of position.
    let mut h = p.conv("gen.seed", seed_in, pw)?.add(p.get("gen.seed.pos").broadcast_to([b, c, f, SEED_LEN])?)?;
    let mut outputs = Vec::with_capacity(LEVELS);
    for j in 0..LEVELS {
        let level = LEVELS - 1 - j;
        let len = level_len(level);
        let z = &noise.blocks[j];
        if z.shape() != [b, 1, f, len] {
            return Err(Error::Invalid(format!("block {j} noise shape {:?}", z.shape())));
        }
        let up = upsample_linear(h)?;
        let input = graph.concat(&[up, graph.leaf(z.clone()), cond.level(level, len)?])?;
        let a = p.conv(&format!("gen.block{j}.conv"), input, ConvGeom::same(arch.kernel_frames, arch.kernel_samples))?;
        let gated = a.slice_channels(0, c)?.gated(a.slice_channels(c, c)?)?;
        h = gated.add(p.conv(&format!("gen.block{j}.res"), up, pw)?)?;
        outputs.push(p.conv(&format!("gen.block{j}.out"), h, pw)?.tanh());
    }
    outputs.reverse();
    Ok(outputs)
}

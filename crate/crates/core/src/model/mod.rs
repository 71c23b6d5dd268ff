//! The conditioning network C, the progressive-upsampling generator G and
//! the multi-scale critic D, plus parameter storage and checkpoints.

mod checkpoint;
mod cond;
mod disc;
mod gen;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use cond::{conditioning, CondPyramid};
pub use disc::discriminate;
pub use gen::{generate, NoiseBundle};
pub use params::{Bound, ParamSet};

use psgan_nn::{Scalar, Tensor};
use rand_distr::{Distribution, StandardNormal};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{FRAME_LEN, LEVELS};
use crate::features::DIM;
use crate::{Error, Result};

/// Dilations of the conditioning stack.
pub const DILATIONS: [usize; 8] = [1, 2, 4, 8, 1, 2, 4, 8];
pub const DISC_BLOCKS: usize = 9;
/// Generator seed length on the sample axis.
pub const SEED_LEN: usize = 16;

/// Sample length of pyramid level `i` (0 is full resolution).
pub fn level_len(i: usize) -> usize {
    FRAME_LEN >> i
}

/// Frame-axis receptive field of the conditioning stack.
pub fn cond_receptive_field() -> usize {
    1 + 2 * DILATIONS.iter().sum::<usize>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub gen_channels: usize,
    pub disc_channels: usize,
    /// Residual width of the conditioning stack.
    pub cond_channels: usize,
    /// Channels of each conditioning head.
    pub cond_out: usize,
    pub kernel_frames: usize,
    pub kernel_samples: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { gen_channels: 128, disc_channels: 128, cond_channels: 64, cond_out: 64, kernel_frames: 3, kernel_samples: 7 }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.gen_channels, self.disc_channels, self.cond_channels, self.cond_out];
        if widths.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.kernel_frames % 2 == 0 || self.kernel_samples % 2 == 0 {
            return Err(Error::Config("kernel extents must be odd".into()));
        }
        Ok(())
    }
}

/// Parameters of all three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks<T> {
    pub arch: ArchConfig,
    pub cond: ParamSet<T>,
    pub gen: ParamSet<T>,
    pub disc: ParamSet<T>,
}

impl<T: Scalar> Networks<T> {
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (kf, ks) = (arch.kernel_frames, arch.kernel_samples);

        let mut cond = ParamSet::new();
        let r = arch.cond_channels;
        cond.push_conv(&mut rng, "cond.in", r, DIM, 1, 1);
        for k in 0..DILATIONS.len() {
            cond.push_conv(&mut rng, &format!("cond.block{k}.filter"), 2 * r, r, 3, 1);
            // The last block's residual output would feed nothing.
            if k + 1 < DILATIONS.len() {
                cond.push_conv(&mut rng, &format!("cond.block{k}.res"), r, r, 1, 1);
            }
            cond.push_conv(&mut rng, &format!("cond.block{k}.skip"), r, r, 1, 1);
        }
        cond.push_conv(&mut rng, "cond.post", r, r, 1, 1);
        for i in 0..LEVELS {
            cond.push_conv(&mut rng, &format!("cond.head{i}"), arch.cond_out, r, 1, 1);
        }

        let mut gen = ParamSet::new();
        let c = arch.gen_channels;
        gen.push_conv(&mut rng, "gen.seed", c, arch.cond_out + 1, 1, 1);
        gen.push(
            "gen.seed.pos",
            Tensor::from_fn([1, c, 1, SEED_LEN], |_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z)
            }),
        );
        for j in 0..LEVELS {
            gen.push_conv(&mut rng, &format!("gen.block{j}.conv"), 2 * c, c + 1 + arch.cond_out, kf, ks);
            gen.push_conv(&mut rng, &format!("gen.block{j}.res"), c, c, 1, 1);
            gen.push_conv(&mut rng, &format!("gen.block{j}.out"), 1, c, 1, 1);
        }

        let mut disc = ParamSet::new();
        let d = arch.disc_channels;
        for k in 0..DISC_BLOCKS {
            disc.push_conv(&mut rng, &format!("disc.block{k}"), 2 * d, disc_block_inputs(arch, k), kf, ks);
        }
        disc.push_conv(&mut rng, "disc.head", 1, d, 1, 1);

        Ok(Self { arch: arch.clone(), cond, gen, disc })
    }

    pub fn count_parameters(&self) -> usize {
        self.cond.count() + self.gen.count() + self.disc.count()
    }

    pub fn cast<U: Scalar>(&self) -> Networks<U> {
        Networks { arch: self.arch.clone(), cond: self.cond.cast(), gen: self.gen.cast(), disc: self.disc.cast() }
    }

    pub fn sets(&self) -> [(&'static str, &ParamSet<T>); 3] {
        [("cond", &self.cond), ("gen", &self.gen), ("disc", &self.disc)]
    }
}

/// Input channels of critic block `k`.
pub(crate) fn disc_block_inputs(arch: &ArchConfig, k: usize) -> usize {
    let prev = if k == 0 { 0 } else { arch.disc_channels };
    let scale = if k < LEVELS { 1 + arch.cond_out } else { 0 };
    let stddev = usize::from(k == DISC_BLOCKS - 1);
    prev + scale + stddev
}

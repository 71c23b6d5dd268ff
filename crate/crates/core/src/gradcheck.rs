//! Central finite-difference verification, in double precision, of every
//! differentiable building block and of the complete training objectives.

use std::time::Instant;

use psgan_nn::ops::{batch_stddev_feature, gated_activation, mean_pool, upsample_linear};
use psgan_nn::{grad_check, grad_check_sampled, ConvGeom, Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::LEVELS;
use crate::features::DIM;
use crate::model::{conditioning, discriminate, generate, level_len, ArchConfig, CondPyramid, Networks, NoiseBundle};
use crate::training::{gradient_penalty, interpolate, r1_penalty, wgan_d_loss, wgan_g_loss, FftLoss, LossWeights};
use crate::{Error, Result};

/// Bound on the relative error of first-order checks.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Bound for objectives that differentiate through an input gradient.
pub const PENALTY_TOLERANCE: f64 = 1e-3;
pub const MAX_CHANNELS: usize = 8;
const STEP: f64 = 1e-5;
const PER_TENSOR: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.error < self.tolerance
    }
}

struct Suite {
    rng: ChaCha8Rng,
    out: Vec<CheckOutcome>,
}

impl Suite {
    fn randn(&mut self, shape: [usize; 4]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| StandardNormal.sample(&mut self.rng))
    }

    fn record(&mut self, name: &str, tolerance: f64, run: impl FnOnce(&mut Self) -> Result<f64>) -> Result<()> {
        let t0 = Instant::now();
        let error = run(self)?;
        self.out.push(CheckOutcome { name: name.to_owned(), error, tolerance, seconds: t0.elapsed().as_secs_f64() });
        Ok(())
    }

    /// Checks `<op(params), r>` for a fixed random `r`.
    fn op<F>(&mut self, name: &str, shapes: &[[usize; 4]], op: F) -> Result<()>
    where
        F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>,
    {
        let params: Vec<Tensor<f64>> = shapes.iter().map(|&s| self.randn(s)).collect();
        let probe = {
            let g = Graph::new();
            let vars: Vec<_> = params.iter().map(|p| g.leaf(p.clone())).collect();
            op(&g, &vars)?.shape()
        };
        let r = self.randn(probe);
        self.record(name, OP_TOLERANCE, |_| {
            grad_check(|g, p| Ok::<_, Error>(op(g, p)?.mul(g.leaf(r.clone()))?.sum()), &params, STEP)
        })
    }
}

fn ops(s: &mut Suite) -> Result<()> {
    s.op("conv2d same", &[[2, 3, 4, 9], [4, 3, 3, 5]], |_, p| Ok(p[0].conv2d(p[1], ConvGeom::same(3, 5))?))?;
    s.op("conv2d strided", &[[2, 3, 4, 16], [4, 3, 3, 7]], |_, p| Ok(p[0].conv2d(p[1], ConvGeom::strided(3, 7, 2))?))?;
    s.op("conv2d dilated", &[[1, 3, 9, 1], [4, 3, 3, 1]], |_, p| Ok(p[0].conv2d(p[1], ConvGeom::dilated_frames(3, 4))?))?;
    s.op("conv2d bias", &[[2, 3, 2, 5], [4, 3, 1, 1], [1, 4, 1, 1]], |_, p| {
        Ok(p[0].conv2d_bias(p[1], p[2], ConvGeom::pointwise())?)
    })?;
    s.op("gated activation", &[[2, 3, 2, 5], [2, 3, 2, 5]], |_, p| Ok(gated_activation(p[0], p[1])?))?;
    s.op("tanh", &[[1, 2, 3, 4]], |_, p| Ok(p[0].tanh()))?;
    s.op("sigmoid", &[[1, 2, 3, 4]], |_, p| Ok(p[0].sigmoid()))?;
    s.op("sqrt", &[[1, 2, 3, 4]], |_, p| Ok(p[0].square().affine(1.0, 0.5).sqrt()))?;
    s.op("relu", &[[1, 2, 3, 4]], |_, p| Ok(p[0].relu()))?;
    s.op("add mul sub", &[[2, 1, 3, 4], [2, 1, 3, 4]], |_, p| Ok(p[0].mul(p[1])?.add(p[0])?.sub(p[1].scale(2.0))?))?;
    s.op("broadcast reduce", &[[1, 2, 3, 1]], |_, p| Ok(p[0].broadcast_to([2, 2, 3, 5])?.square().reduce_to([1, 2, 1, 5])?))?;
    s.op("concat slice pad", &[[1, 2, 3, 4], [1, 1, 3, 4]], |g, p| {
        let c = g.concat(&[p[0], p[1]])?;
        Ok(c.slice_channels(1, 2)?.pad_channels(1, 4)?.square())
    })?;
    s.op("upsample linear", &[[1, 2, 2, 8]], |_, p| Ok(upsample_linear(p[0])?))?;
    s.op("mean pool", &[[1, 2, 2, 8]], |_, p| Ok(mean_pool(p[0])?))?;
    s.op("batch stddev", &[[3, 2, 2, 4]], |_, p| Ok(batch_stddev_feature(p[0])?))?;
    let fft = FftLoss::<f64>::new();
    let target = s.randn([1, 1, 2, 512]);
    s.op("fft magnitude", &[[1, 1, 2, 512]], |_, p| fft.magnitude(p[0]))?;
    s.record("fft loss", OP_TOLERANCE, |s| {
        let x = s.randn([1, 1, 2, 512]);
        grad_check(|g, p| fft.loss(p[0], g.leaf(target.clone())), &[x], STEP)
    })?;
    s.record("wgan losses", OP_TOLERANCE, |s| {
        let scores = [s.randn([2, 1, 1, 1]), s.randn([2, 1, 1, 1])];
        grad_check(|_, p| Ok::<_, Error>(wgan_d_loss(p[0], p[1])?.add(wgan_g_loss(p[1]).scale(0.5))?), &scores, STEP)
    })
}

fn features(s: &mut Suite, b: usize, f: usize) -> Tensor<f64> {
    s.randn([b, DIM, f, 1])
}

fn pyramid(s: &mut Suite, b: usize, f: usize, gain: f64) -> Vec<Tensor<f64>> {
    (0..LEVELS).map(|i| s.randn([b, 1, f, level_len(i)]).map(|v| gain * v)).collect()
}

fn leaves<'g>(g: &'g Graph<f64>, ts: &[Tensor<f64>]) -> Vec<Var<'g, f64>> {
    ts.iter().map(|t| g.leaf(t.clone())).collect()
}

fn objectives(s: &mut Suite, channels: usize, seed: u64) -> Result<()> {
    let arch = ArchConfig {
        gen_channels: channels,
        disc_channels: channels,
        cond_channels: channels,
        cond_out: (channels / 2).max(1),
        ..Default::default()
    };
    let mut nets = Networks::<f64>::init(&arch, seed)?;
    let (b, f) = (2, 2);
    let feats = features(s, b, f);
    let real = pyramid(s, b, f, 0.3);
    let noise = NoiseBundle::<f64>::sample(&mut s.rng, b, f);
    let w = LossWeights::default();
    let fft = FftLoss::<f64>::new();

    let nc = nets.cond.len();
    let params: Vec<Tensor<f64>> = nets.cond.tensors().iter().chain(nets.gen.tensors()).cloned().collect();
    s.record("conditioning -> generator -> L_G^W + lambda1 L_FFT", OP_TOLERANCE, |_| {
        grad_check_sampled(
            |g, p| {
                let cond = conditioning(&arch, &nets.cond.bind_vars(&p[..nc]), g.leaf(feats.clone()))?;
                let fake = generate(&arch, &nets.gen.bind_vars(&p[nc..]), &cond, &noise)?;
                let score = discriminate(&arch, &nets.disc.bind(g), &fake, &cond)?;
                let l = fft.loss(fake[0], g.leaf(real[0].clone()))?;
                Ok::<_, Error>(wgan_g_loss(score).add(l.scale(w.lambda1))?)
            },
            &params,
            STEP,
            PER_TENSOR,
        )
    })?;

    // Fixed conditioning and fakes for the critic objectives.
    let (cond_vals, fake): (Vec<Tensor<f64>>, Vec<Tensor<f64>>) = {
        let g = Graph::new();
        let cond = conditioning(&arch, &nets.cond.bind(&g), g.leaf(feats.clone()))?;
        let fake = generate(&arch, &nets.gen.bind(&g), &cond, &noise)?;
        (
            (0..LEVELS).map(|i| (*cond.compact(i).value()).clone()).collect(),
            fake.iter().map(|v| (*v.value()).clone()).collect(),
        )
    };
    let x_tilde = interpolate(&real, &fake, &[0.3, 0.7])?;

    // Scale the head so the input-gradient norm sits near 3 and the one-sided
    // penalty is active.
    let norm = {
        let g = Graph::new();
        let dp = nets.disc.bind(&g);
        let cond = CondPyramid::from_compact(leaves(&g, &cond_vals));
        let xs = leaves(&g, &x_tilde);
        let score = discriminate(&arch, &dp, &xs, &cond)?.sum();
        let grads = g.grad(score, &xs)?;
        grads.iter().map(|v| v.value().data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt() / b as f64
    };
    if let Some(head) = nets.disc.get_mut("disc.head.w") {
        *head = head.map(|v| v * 3.0 / norm.max(1e-12));
    }
    let disc = nets.disc.clone();

    s.record("critic -> L_D^W", OP_TOLERANCE, |_| {
        grad_check_sampled(
            |g, p| {
                let dp = disc.bind_vars(p);
                let cond = CondPyramid::from_compact(leaves(g, &cond_vals));
                let xr = leaves(g, &real);
                let xf = leaves(g, &fake);
                wgan_d_loss(discriminate(&arch, &dp, &xr, &cond)?, discriminate(&arch, &dp, &xf, &cond)?)
            },
            disc.tensors(),
            STEP,
            PER_TENSOR,
        )
    })?;
    s.record("critic -> gradient penalty", PENALTY_TOLERANCE, |_| {
        grad_check_sampled(
            |g, p| {
                let dp = disc.bind_vars(p);
                let cond = CondPyramid::from_compact(leaves(g, &cond_vals));
                gradient_penalty(g, |x| discriminate(&arch, &dp, x, &cond), &x_tilde)
            },
            disc.tensors(),
            STEP,
            PER_TENSOR,
        )
    })?;
    s.record("critic -> R1 penalty", PENALTY_TOLERANCE, |_| {
        grad_check_sampled(
            |g, p| {
                let dp = disc.bind_vars(p);
                let cond = CondPyramid::from_compact(leaves(g, &cond_vals));
                Ok::<_, Error>(r1_penalty(g, |x| discriminate(&arch, &dp, x, &cond), &real)?.0)
            },
            disc.tensors(),
            STEP,
            PER_TENSOR,
        )
    })?;
    s.record("critic -> L_D^W + lambda2 GP + lambda3 R1", PENALTY_TOLERANCE, |_| {
        grad_check_sampled(
            |g, p| {
                let dp = disc.bind_vars(p);
                let cond = CondPyramid::from_compact(leaves(g, &cond_vals));
                let (r1, real_scores) = r1_penalty(g, |x| discriminate(&arch, &dp, x, &cond), &real)?;
                let fake_scores = discriminate(&arch, &dp, &leaves(g, &fake), &cond)?;
                let d = wgan_d_loss(real_scores, fake_scores)?;
                let gp = gradient_penalty(g, |x| discriminate(&arch, &dp, x, &cond), &x_tilde)?;
                Ok::<_, Error>(d.add(gp.scale(w.lambda2))?.add(r1.scale(w.lambda3))?)
            },
            disc.tensors(),
            STEP,
            PER_TENSOR,
        )
    })
}

/// Runs every check on networks with `channels` channels per layer.
pub fn run_grad_checks(seed: u64, channels: usize) -> Result<Vec<CheckOutcome>> {
    if channels == 0 || channels > MAX_CHANNELS {
        return Err(Error::Invalid(format!("gradient checks use 1..={MAX_CHANNELS} channels, got {channels}")));
    }
    let mut s = Suite { rng: ChaCha8Rng::seed_from_u64(seed), out: Vec::new() };
    ops(&mut s)?;
    objectives(&mut s, channels, seed)?;
    Ok(s.out)
}

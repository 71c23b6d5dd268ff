//! Adversarial training: one critic update followed by one joint
//! generator/conditioning update per iteration.

mod config;
mod data;
mod losses;
pub mod toy;

pub use config::{AdamSettings, Analysis, Paths, TrainConfig};
pub use data::{decode_pyramids, encode_pyramids, Dataset, TrainBatch, Utterance, MANIFEST};
pub use losses::{gradient_penalty, interpolate, r1_penalty, wgan_d_loss, wgan_g_loss, FftLoss, LossWeights};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use psgan_nn::{Adam, Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::io_err;
use crate::features::FeatureStats;
use crate::model::{conditioning, discriminate, generate, read_checkpoint, write_checkpoint, Checkpoint, Networks, NoiseBundle};
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "iter,L_D^W,GP,R1,L_G^W,L_FFT";
pub const METRICS_FILE: &str = "metrics.csv";

/// Loss components of one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub iter: u64,
    pub d_wgan: f64,
    pub gp: f64,
    pub r1: f64,
    pub g_wgan: f64,
    pub fft: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{}", self.iter, self.d_wgan, self.gp, self.r1, self.g_wgan, self.fft)
    }

    fn is_finite(&self) -> bool {
        [self.d_wgan, self.gp, self.r1, self.g_wgan, self.fft].iter().all(|v| v.is_finite())
    }
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct ResumeState {
    iteration: u64,
    rng: RngState,
    steps: [u64; 3],
    skipped: [u64; 3],
    config: TrainConfig,
}

/// Networks, optimiser state and random stream of a training run.
pub struct Trainer {
    pub config: TrainConfig,
    pub nets: Networks<f32>,
    pub stats: FeatureStats,
    opt: [Adam<f32>; 3],
    rng: ChaCha8Rng,
    iteration: u64,
    fft: FftLoss<f32>,
}

const OPT_NAMES: [&str; 3] = ["cond", "gen", "disc"];

impl Trainer {
    pub fn new(config: TrainConfig, stats: FeatureStats) -> Result<Self> {
        config.validate()?;
        let nets = Networks::init(&config.arch, config.seed)?;
        let adam = config.adam.into();
        let opt = [
            Adam::new(adam, nets.cond.tensors()),
            Adam::new(adam, nets.gen.tensors()),
            Adam::new(adam, nets.disc.tensors()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self { config, nets, stats, opt, rng, iteration: 0, fft: FftLoss::new() })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Number of Adam updates applied to (C, G, D).
    pub fn update_counts(&self) -> [u64; 3] {
        [self.opt[0].step, self.opt[1].step, self.opt[2].step]
    }

    pub fn sample_batch(&mut self, data: &Dataset) -> Result<TrainBatch> {
        data.sample_batch(&mut self.rng, &self.stats, self.config.batch_size, self.config.segment_frames)
    }

    /// Draws a batch and performs one iteration.
    pub fn train_iteration(&mut self, data: &Dataset) -> Result<StepMetrics> {
        let batch = self.sample_batch(data)?;
        self.step(&batch)
    }

    /// One critic update, then one generator/conditioning update.
    pub fn step(&mut self, batch: &TrainBatch) -> Result<StepMetrics> {
        let (d_wgan, gp, r1) = self.critic_step(batch)?;
        let (g_wgan, fft) = self.generator_step(batch)?;
        self.iteration += 1;
        let m = StepMetrics { iter: self.iteration, d_wgan, gp, r1, g_wgan, fft };
        if !m.is_finite() {
            return Err(Error::NonFinite(format!("metrics at iteration {}", self.iteration)));
        }
        Ok(m)
    }

    /// Updates D on `L_D^W + lambda2 GP + lambda3 R1`; returns the three terms.
    pub fn critic_step(&mut self, batch: &TrainBatch) -> Result<(f64, f64, f64)> {
        let (b, f) = (batch.batch(), batch.frames());
        let arch = &self.config.arch;
        let w = self.config.weights;
        let g = Graph::new();
        // Generator and conditioning outputs are constants here.
        let cond = conditioning(arch, &self.nets.cond.bind(&g), g.leaf(batch.features.clone()))?.detached();
        let noise = NoiseBundle::sample(&mut self.rng, b, f);
        let fake: Vec<Tensor<f32>> =
            generate(arch, &self.nets.gen.bind(&g), &cond, &noise)?.iter().map(|v| (*v.value()).clone()).collect();
        let eps: Vec<f32> = (0..b).map(|_| self.rng.random::<f32>()).collect();
        let x_tilde = interpolate(&batch.real, &fake, &eps)?;

        let dp = self.nets.disc.bind(&g);
        let (r1, real_scores) = r1_penalty(&g, |x| discriminate(arch, &dp, x, &cond), &batch.real)?;
        let fake_vars: Vec<_> = fake.iter().map(|t| g.leaf(t.clone())).collect();
        let fake_scores = discriminate(arch, &dp, &fake_vars, &cond)?;
        let gp = gradient_penalty(&g, |x| discriminate(arch, &dp, x, &cond), &x_tilde)?;
        let d_wgan = wgan_d_loss(real_scores, fake_scores)?;
        let total = d_wgan.add(gp.scale(w.lambda2 as f32))?.add(r1.scale(w.lambda3 as f32))?;
        if !total.item().is_finite() {
            return Err(Error::NonFinite(format!("critic loss at iteration {}", self.iteration + 1)));
        }
        let grads: Vec<Tensor<f32>> = g.grad(total, dp.vars())?.iter().map(|v| (*v.value()).clone()).collect();
        self.opt[2].update(self.nets.disc.tensors_mut(), &grads);
        Ok((d_wgan.item() as f64, gp.item() as f64, r1.item() as f64))
    }

    /// Updates C and G jointly on `L_G^W + lambda1 L_FFT` with fresh noise;
    /// returns the two terms. Gradients reach C through both G and D.
    pub fn generator_step(&mut self, batch: &TrainBatch) -> Result<(f64, f64)> {
        let noise = NoiseBundle::sample(&mut self.rng, batch.batch(), batch.frames());
        let arch = &self.config.arch;
        let g = Graph::new();
        let cp = self.nets.cond.bind(&g);
        let gp = self.nets.gen.bind(&g);
        let cond = conditioning(arch, &cp, g.leaf(batch.features.clone()))?;
        let fake = generate(arch, &gp, &cond, &noise)?;
        let score = discriminate(arch, &self.nets.disc.bind(&g), &fake, &cond)?;
        let g_wgan = wgan_g_loss(score);
        let fft = self.fft.loss(fake[0], g.leaf(batch.real[0].clone()))?;
        let total = g_wgan.add(fft.scale(self.config.weights.lambda1 as f32))?;
        if !total.item().is_finite() {
            return Err(Error::NonFinite(format!("generator loss at iteration {}", self.iteration + 1)));
        }
        let wrt: Vec<_> = cp.vars().iter().chain(gp.vars()).copied().collect();
        let mut grads: Vec<Tensor<f32>> = g.grad(total, &wrt)?.iter().map(|v| (*v.value()).clone()).collect();
        let g_grads = grads.split_off(cp.vars().len());
        self.opt[0].update(self.nets.cond.tensors_mut(), &grads);
        self.opt[1].update(self.nets.gen.tensors_mut(), &g_grads);
        Ok((g_wgan.item() as f64, fft.item() as f64))
    }

    /// FFT loss of the current networks for a fixed noise draw.
    pub fn fft_loss(&self, batch: &TrainBatch, noise: &NoiseBundle<f32>) -> Result<f64> {
        let arch = &self.config.arch;
        let g = Graph::new();
        let cond = conditioning(arch, &self.nets.cond.bind(&g), g.leaf(batch.features.clone()))?;
        let fake = generate(arch, &self.nets.gen.bind(&g), &cond, noise)?;
        Ok(self.fft.loss(fake[0], g.leaf(batch.real[0].clone()))?.item() as f64)
    }

    /// Full training state, including optimiser moments and the RNG position.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(self.nets.clone(), self.stats.clone());
        for (k, (set_name, set)) in self.nets.sets().into_iter().enumerate() {
            debug_assert_eq!(set_name, OPT_NAMES[k]);
            for (i, name) in set.names().iter().enumerate() {
                ck.aux.push(format!("adam.m.{name}"), self.opt[k].m[i].clone());
                ck.aux.push(format!("adam.v.{name}"), self.opt[k].v[i].clone());
            }
        }
        let state = ResumeState {
            iteration: self.iteration,
            rng: RngState {
                seed: self.rng.get_seed().to_vec(),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            steps: self.update_counts(),
            skipped: [self.opt[0].skipped, self.opt[1].skipped, self.opt[2].skipped],
            config: self.config.clone(),
        };
        ck.extra = serde_json::to_value(state).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(ck)
    }

    /// Restores a run saved by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let state: ResumeState = serde_json::from_value(ck.extra.clone())
            .map_err(|e| Error::Checkpoint(format!("no training state: {e}")))?;
        let mut t = Self::new(state.config, ck.stats.clone())?;
        ck.apply_to(&mut t.nets)?;
        for (k, set) in [&t.nets.cond, &t.nets.gen, &t.nets.disc].into_iter().enumerate() {
            let opt = &mut t.opt[k];
            opt.step = state.steps[k];
            opt.skipped = state.skipped[k];
            for (i, name) in set.names().iter().enumerate() {
                for (slot, kind) in [(&mut opt.m[i], "m"), (&mut opt.v[i], "v")] {
                    let key = format!("adam.{kind}.{name}");
                    let saved = ck.aux.get(&key).ok_or_else(|| Error::Checkpoint(format!("missing {key}")))?;
                    if saved.shape() != slot.shape() {
                        return Err(Error::Checkpoint(format!("layer {key}: shape {:?}, expected {:?}", saved.shape(), slot.shape())));
                    }
                    *slot = saved.clone();
                }
            }
        }
        let seed: [u8; 32] = state.rng.seed.try_into().map_err(|_| Error::Checkpoint("bad RNG seed".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(state.rng.stream);
        rng.set_word_pos(state.rng.word_pos.parse().map_err(|_| Error::Checkpoint("bad RNG position".into()))?);
        t.rng = rng;
        t.iteration = state.iteration;
        Ok(t)
    }
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub metrics: Vec<StepMetrics>,
    pub final_checkpoint: PathBuf,
}

/// Runs `trainer` up to `config.iterations`, appending to `metrics.csv`
/// and writing checkpoints into `out_dir`.
pub fn train(trainer: &mut Trainer, data: &Dataset, out_dir: &Path) -> Result<TrainSummary> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let fresh = trainer.iteration() == 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&metrics_path)
        .map_err(io_err(&metrics_path))?;
    let mut csv = BufWriter::new(file);
    if fresh {
        writeln!(csv, "{METRICS_HEADER}").map_err(io_err(&metrics_path))?;
    }
    let target = trainer.config.iterations;
    let every = trainer.config.checkpoint_every;
    let mut metrics = Vec::new();
    while trainer.iteration() < target {
        let m = trainer.train_iteration(data)?;
        writeln!(csv, "{}", m.csv_row()).map_err(io_err(&metrics_path))?;
        if m.iter % every == 0 {
            csv.flush().map_err(io_err(&metrics_path))?;
            let path = out_dir.join(format!("checkpoint-{:06}.psgc", m.iter));
            write_checkpoint(&path, &trainer.checkpoint()?)?;
        }
        if m.iter % 100 == 0 || m.iter == 1 {
            info!(
                "iter {} L_D^W {:.4} GP {:.4} R1 {:.4} L_G^W {:.4} L_FFT {:.4}",
                m.iter, m.d_wgan, m.gp, m.r1, m.g_wgan, m.fft
            );
        }
        metrics.push(m);
    }
    csv.flush().map_err(io_err(&metrics_path))?;
    let final_checkpoint = out_dir.join("final.psgc");
    write_checkpoint(&final_checkpoint, &trainer.checkpoint()?)?;
    Ok(TrainSummary { metrics, final_checkpoint })
}

/// Restores a trainer from a checkpoint file.
pub fn resume(path: &Path) -> Result<Trainer> {
    Trainer::from_checkpoint(read_checkpoint(path)?)
}

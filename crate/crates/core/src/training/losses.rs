//! Wasserstein critic/generator losses, the masked gradient penalty, the R1
//! penalty and the FFT-magnitude loss.

use std::f64::consts::PI;
use std::rc::Rc;

use psgan_nn::{Graph, SampleMatrix, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::dsp::FRAME_LEN;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// FFT loss.
    pub lambda1: f64,
    /// Gradient penalty.
    pub lambda2: f64,
    /// R1 penalty.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 10.0, lambda3: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2, self.lambda3].iter().all(|l| *l >= 0.0 && l.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")))
        }
    }
}

/// `mean(fake) - mean(real)`.
pub fn wgan_d_loss<'g, T: Scalar>(real: Var<'g, T>, fake: Var<'g, T>) -> Result<Var<'g, T>> {
    Ok(fake.mean().sub(real.mean())?)
}

/// `-mean(fake)`; the real term is constant with respect to the generator.
pub fn wgan_g_loss<T: Scalar>(fake: Var<'_, T>) -> Var<'_, T> {
    fake.mean().neg()
}

/// `eps * x + (1 - eps) * x_hat` per batch item, shared across scales.
pub fn interpolate<T: Scalar>(x: &[Tensor<T>], x_hat: &[Tensor<T>], eps: &[T]) -> Result<Vec<Tensor<T>>> {
    if x.len() != x_hat.len() {
        return Err(Error::Invalid("interpolation endpoints have different scale counts".into()));
    }
    x.iter()
        .zip(x_hat)
        .map(|(a, b)| {
            if a.shape() != b.shape() || a.shape()[0] != eps.len() {
                return Err(Error::Invalid(format!("interpolation shapes {:?} / {:?}", a.shape(), b.shape())));
            }
            let per_item = a.len() / eps.len();
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .enumerate()
                .map(|(i, (&xa, &xb))| {
                    let e = eps[i / per_item];
                    e * xa + (T::one() - e) * xb
                })
                .collect();
            Ok(Tensor::new(a.shape(), data)?)
        })
        .collect()
}

/// Per-item squared norm of the input gradient, taken jointly over every
/// scale. Returns `(scores, squared norms)`, both of shape `(B, 1, 1, 1)`.
fn input_gradient_sq_norm<'g, T, F>(graph: &'g Graph<T>, critic: F, inputs: &[Tensor<T>]) -> Result<(Var<'g, T>, Var<'g, T>)>
where
    T: Scalar,
    F: FnOnce(&[Var<'g, T>]) -> Result<Var<'g, T>>,
{
    let leaves: Vec<_> = inputs.iter().map(|t| graph.leaf(t.clone())).collect();
    let scores = critic(&leaves)?;
    let batch = scores.shape()[0];
    let grads = graph.grad(scores.sum(), &leaves)?;
    let mut sq: Option<Var<'g, T>> = None;
    for g in grads {
        let s = g.square().reduce_to([batch, 1, 1, 1])?;
        sq = Some(match sq {
            Some(acc) => acc.add(s)?,
            None => s,
        });
    }
    let sq = sq.ok_or_else(|| Error::Invalid("critic input is empty".into()))?;
    if !sq.value().is_finite() {
        return Err(Error::NonFinite("critic input gradient".into()));
    }
    Ok((scores, sq))
}

/// `mean_b max(0, |grad D(x_tilde)| - 1)^2`, differentiable in the critic's
/// parameters.
pub fn gradient_penalty<'g, T, F>(graph: &'g Graph<T>, critic: F, x_tilde: &[Tensor<T>]) -> Result<Var<'g, T>>
where
    T: Scalar,
    F: FnOnce(&[Var<'g, T>]) -> Result<Var<'g, T>>,
{
    let (_, sq) = input_gradient_sq_norm(graph, critic, x_tilde)?;
    Ok(sq.sqrt().affine(T::one(), -T::one()).relu().square().mean())
}

/// `mean_b |grad D(x)|^2` at real samples. Also returns the real scores.
pub fn r1_penalty<'g, T, F>(graph: &'g Graph<T>, critic: F, x: &[Tensor<T>]) -> Result<(Var<'g, T>, Var<'g, T>)>
where
    T: Scalar,
    F: FnOnce(&[Var<'g, T>]) -> Result<Var<'g, T>>,
{
    let (scores, sq) = input_gradient_sq_norm(graph, critic, x)?;
    Ok((sq.mean(), scores))
}

/// Mean squared difference of DFT magnitudes over 512-sample frames.
pub struct FftLoss<T> {
    re: Rc<SampleMatrix<T>>,
    im: Rc<SampleMatrix<T>>,
}

impl<T: Scalar> Default for FftLoss<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> FftLoss<T> {
    pub const BINS: usize = FRAME_LEN / 2 + 1;

    pub fn new() -> Self {
        let n = FRAME_LEN;
        let angle = |i: usize, k: usize| 2.0 * PI * ((i * k) % n) as f64 / n as f64;
        Self {
            re: Rc::new(SampleMatrix::dense(n, Self::BINS, |i, k| T::lit(angle(i, k).cos()))),
            im: Rc::new(SampleMatrix::dense(n, Self::BINS, |i, k| T::lit(-angle(i, k).sin()))),
        }
    }

    /// `|DFT(x)|` over the sample axis. The square root has zero derivative
    /// at zero magnitude.
    pub fn magnitude<'g>(&self, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let re = x.sample_map(&self.re)?;
        let im = x.sample_map(&self.im)?;
        Ok(re.square().add(im.square())?.sqrt())
    }

    pub fn loss<'g>(&self, x_hat: Var<'g, T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        if x_hat.shape() != x.shape() || x.shape()[3] != FRAME_LEN {
            return Err(Error::Invalid(format!("FFT loss needs matching {FRAME_LEN}-sample frames, got {:?} / {:?}", x_hat.shape(), x.shape())));
        }
        Ok(self.magnitude(x)?.sub(self.magnitude(x_hat)?)?.square().mean())
    }
}

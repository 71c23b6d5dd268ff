//! Composite operations built from graph primitives.

use std::rc::Rc;

use crate::{NnError, Result, SampleMatrix, Scalar, Var};

/// `tanh(a) * sigmoid(b)`.
pub fn gated_activation<'g, T: Scalar>(a: Var<'g, T>, b: Var<'g, T>) -> Result<Var<'g, T>> {
    a.gated(b)
}

/// Doubles the sample axis by linear interpolation (end sample repeated).
pub fn upsample_linear<'g, T: Scalar>(x: Var<'g, T>) -> Result<Var<'g, T>> {
    let len = x.shape()[3];
    if len < 2 {
        return Err(NnError::Shape { op: "upsample_linear", detail: format!("length {len} < 2") });
    }
    x.sample_map(&Rc::new(SampleMatrix::upsample2(len)))
}

/// Halves the sample axis by averaging adjacent pairs.
pub fn mean_pool<'g, T: Scalar>(x: Var<'g, T>) -> Result<Var<'g, T>> {
    let len = x.shape()[3];
    if len < 2 || len % 2 != 0 {
        return Err(NnError::Shape { op: "mean_pool", detail: format!("length {len} not even") });
    }
    x.sample_map(&Rc::new(SampleMatrix::pool2(len)))
}

/// Appends one channel holding the cross-batch standard deviation (population
/// form), averaged over all channels and positions.
pub fn batch_stddev_feature<'g, T: Scalar>(x: Var<'g, T>) -> Result<Var<'g, T>> {
    let [b, c, f, l] = x.shape();
    let inv_b = T::one() / T::from_usize(b).unwrap();
    let per_pos = [1, c, f, l];
    let mean = x.reduce_to(per_pos)?.scale(inv_b);
    let dev = x.sub(mean.broadcast_to(x.shape())?)?;
    let var = dev.square().reduce_to(per_pos)?.scale(inv_b);
    let std = var.sqrt().mean();
    let feature = std.broadcast_to([b, 1, f, l])?;
    x.graph().concat(&[x, feature])
}

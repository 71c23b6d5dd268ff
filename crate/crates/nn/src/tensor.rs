use crate::{NnError, Result, Scalar};

/// `(batch, channels, frames, samples)`.
pub type Shape = [usize; 4];

/// Dense row-major 4-D tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

pub(crate) fn numel(shape: Shape) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(NnError::Shape {
                op: "tensor",
                detail: format!("shape {shape:?} needs {} values, got {}", numel(shape), data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![T::zero(); numel(shape)] }
    }

    pub fn full(shape: Shape, v: T) -> Self {
        Self { shape, data: vec![v; numel(shape)] }
    }

    pub fn scalar(v: T) -> Self {
        Self::full([1, 1, 1, 1], v)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(numel(shape));
        for b in 0..shape[0] {
            for c in 0..shape[1] {
                for fr in 0..shape[2] {
                    for s in 0..shape[3] {
                        data.push(f([b, c, fr, s]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn index(&self, idx: [usize; 4]) -> usize {
        let [_, c, f, s] = self.shape;
        ((idx[0] * c + idx[1]) * f + idx[2]) * s + idx[3]
    }

    pub fn at(&self, idx: [usize; 4]) -> T {
        self.data[self.index(idx)]
    }

    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(NnError::Shape {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        }
    }

    /// Copies frames `[start, start + len)` along axis 2.
    pub fn frames(&self, start: usize, len: usize) -> Self {
        let [b, c, f, s] = self.shape;
        assert!(start + len <= f, "frame range out of bounds");
        let mut out = Vec::with_capacity(b * c * len * s);
        for bc in 0..b * c {
            let base = (bc * f + start) * s;
            out.extend_from_slice(&self.data[base..base + len * s]);
        }
        Self { shape: [b, c, len, s], data: out }
    }

    /// Stacks tensors of shape `(1, c, f, s)` along the batch axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or(NnError::Shape { op: "stack", detail: "empty".into() })?;
        let [_, c, f, s] = first.shape;
        let mut data = Vec::with_capacity(items.len() * c * f * s);
        for t in items {
            if t.shape != [1, c, f, s] {
                return Err(NnError::Shape {
                    op: "stack",
                    detail: format!("{:?} vs {:?}", t.shape, first.shape),
                });
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Self { shape: [items.len(), c, f, s], data })
    }
}

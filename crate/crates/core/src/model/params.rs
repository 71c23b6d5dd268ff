use std::collections::HashMap;

use psgan_nn::{ConvGeom, Graph, Scalar, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Ordered, named collection of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate layer {name}");
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    /// Replaces a layer's values, checking its shape.
    pub fn assign(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected layer {name}")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "layer {name}: expected shape {:?}, found {:?}",
                slot.shape(),
                tensor.shape()
            )));
        }
        *slot = tensor;
        Ok(())
    }

    /// Adds every tensor as a leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph<T>) -> Bound<'g, T> {
        let vars = self.tensors.iter().map(|t| graph.leaf(t.clone())).collect();
        let index = self.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Bound { vars, index }
    }

    /// Names existing graph values after this set's layers.
    pub fn bind_vars<'g>(&self, vars: &[Var<'g, T>]) -> Bound<'g, T> {
        assert_eq!(vars.len(), self.len(), "one variable per layer");
        let index = self.names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Bound { vars: vars.to_vec(), index }
    }

    pub(crate) fn push_conv<R: Rng>(&mut self, rng: &mut R, name: &str, co: usize, ci: usize, kf: usize, ks: usize) {
        let std = 1.0 / ((ci * kf * ks) as f64).sqrt();
        let w = Tensor::from_fn([co, ci, kf, ks], |_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(z * std)
        });
        self.push(format!("{name}.w"), w);
        self.push(format!("{name}.b"), Tensor::zeros([1, co, 1, 1]));
    }
}

/// Graph leaves for a parameter set.
pub struct Bound<'g, T> {
    vars: Vec<Var<'g, T>>,
    index: HashMap<String, usize>,
}

impl<'g, T: Scalar> Bound<'g, T> {
    pub fn vars(&self) -> &[Var<'g, T>] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Var<'g, T> {
        match self.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("layer {name} is not part of this parameter set"),
        }
    }

    /// Convolution with the `name.w` kernel and `name.b` bias.
    pub(crate) fn conv(&self, name: &str, x: Var<'g, T>, geom: ConvGeom) -> Result<Var<'g, T>> {
        Ok(x.conv2d_bias(self.get(&format!("{name}.w")), self.get(&format!("{name}.b")), geom)?)
    }
}

//! A small reverse-mode automatic differentiation engine.
//!
//! [`Tensor`] is a plain dense array with an optional gradient buffer.
//! Computation happens on a [`Graph`]: every operation appends a node and
//! returns a [`Var`] handle, and [`Graph::backward`] walks the nodes in
//! reverse creation order, which is always a valid topological order.
//!
//! Everything is `f64`. Convolutions are cross-correlations (no kernel flip).

mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod graph;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{NetworkEntry, ParamEntry, ParameterSet};
pub use conv::ConvParams;
pub use gradcheck::{grad_check, grad_check_coords, relative_error, GradCheck};
pub use graph::{Activation, Graph, Var};

use crate::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(&[1], value)
    }

    /// Turns on gradient tracking with a zeroed buffer.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        let g = self
            .grad
            .as_mut()
            .ok_or_else(|| Error::invalid("tensor does not track gradients"))?;
        if g.len() != delta.len() {
            return Err(Error::shape(format!(
                "gradient length {} vs {}",
                g.len(),
                delta.len()
            )));
        }
        g.iter_mut().zip(delta).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub id: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(id: impl Into<String>, tensor: Tensor) -> Self {
        let tensor = if tensor.requires_grad() {
            tensor
        } else {
            tensor.with_grad()
        };
        Self {
            id: id.into(),
            tensor,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }
}

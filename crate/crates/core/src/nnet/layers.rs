use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{Bound, NnError, Tape, Tensor, Var};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
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

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar weights.
    pub fn n_weights(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces every tensor by name, checking shapes. Used when loading
    /// checkpoints into a freshly initialized model.
    pub fn assign(&mut self, named: &[(String, Tensor)]) -> Result<(), NnError> {
        if named.len() != self.tensors.len() {
            return Err(NnError::ParamCount { expected: self.tensors.len(), got: named.len() });
        }
        for (name, t) in named {
            let id = self.find(name).ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            let current = &self.tensors[id.0];
            if current.shape() != t.shape() {
                return Err(NnError::Shape {
                    op: "assign",
                    left: current.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            self.tensors[id.0] = t.clone();
        }
        Ok(())
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect() }
    }

    /// Per-parameter gradients in store order (zeros for unused parameters).
    pub fn collect_grads(&self, bound: &Bound, grads: &super::Gradients) -> Vec<Tensor> {
        bound.vars.iter().zip(&self.tensors).map(|(&v, t)| grads.get_or_zeros(v, t)).collect()
    }
}

/// Affine layer `x·W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    /// Uniform fan-in initialization with limit `sqrt(6 / inputs)`, zero bias.
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut crate::Rng) -> Self {
        let limit = math::sqrt(6.0 / inputs as f64);
        let w: Vec<f64> = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        let weight = store.add(alloc::format!("{name}.weight"), Tensor::matrix(inputs, outputs, w).expect("shape"));
        let bias = store.add(alloc::format!("{name}.bias"), Tensor::zeros(vec![1, outputs]));
        Self { weight, bias, inputs, outputs }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        let xw = tape.matmul(x, bound.var(self.weight))?;
        tape.add_row(xw, bound.var(self.bias))
    }
}

/// Multilayer perceptron with ReLU after every hidden layer and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// `widths` lists the output width of each layer, last one included.
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, widths: &[usize], rng: &mut crate::Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = inputs;
        for (l, &w) in widths.iter().enumerate() {
            layers.push(Dense::new(store, &alloc::format!("{name}.{l}"), fan_in, w, rng));
            fan_in = w;
        }
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, bound, h)?;
            if l + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

//! Reverse-mode recording of the ops in [`super::ops`].

use rand::Rng;

use super::ops::{self, Precision};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Relu(Var),
    AvgPool { x: Var, k: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    Concat { a: Var, b: Var },
    Dropout { x: Var, mask: Option<Vec<f64>> },
    Normalize { x: Var, std: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    precision: Precision,
}

/// Gradients indexed by [`Var`]; `None` where nothing flowed.
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g).expect("gradient shapes follow values"),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new(precision: Precision) -> Self {
        Self { nodes: Vec::new(), precision }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::conv3d(self.value(x), self.value(w), self.value(b), stride, pad, self.precision)?;
        let rg = self.grad_of(x) || self.grad_of(w) || self.grad_of(b);
        Ok(self.push(y, Op::Conv { x, w, b, stride, pad }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x).clone());
        let rg = self.grad_of(x);
        self.push(y, Op::Relu(x), rg)
    }

    pub fn avg_pool(&mut self, x: Var, k: usize) -> Result<Var> {
        let y = ops::avg_pool3d(self.value(x), k)?;
        let rg = self.grad_of(x);
        Ok(self.push(y, Op::AvgPool { x, k }, rg))
    }

    pub fn max_pool(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (y, argmax) = ops::max_pool3d(self.value(x), k, stride)?;
        let rg = self.grad_of(x);
        Ok(self.push(y, Op::MaxPool { x, argmax }, rg))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_channels(self.value(a), self.value(b))?;
        let rg = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(y, Op::Concat { a, b }, rg))
    }

    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut impl Rng) -> Var {
        let (y, mask) = ops::dropout(self.value(x), rate, training, rng);
        let rg = self.grad_of(x);
        self.push(y, Op::Dropout { x, mask }, rg)
    }

    pub fn normalize(&mut self, x: Var, mean: &[f64], std: &[f64]) -> Result<Var> {
        let y = ops::normalize(self.value(x), mean, std)?;
        let rg = self.grad_of(x);
        Ok(self.push(y, Op::Normalize { x, std: std.to_vec() }, rg))
    }

    /// Propagates the seeded output gradients back to every node that requires one.
    pub fn backward(&self, seeds: Vec<(Var, Tensor)>) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            if g.shape() != self.value(v).shape() {
                return Err(Error::ShapeMismatch(format!("seed {:?} for value {:?}", g.shape(), self.value(v).shape())));
            }
            accumulate(&mut grads[v.0], g);
        }
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(gy);
                }
                Op::Conv { x, w, b, stride, pad } => {
                    let need_x = self.grad_of(*x);
                    let g = ops::conv3d_backward(self.value(*x), self.value(*w), &gy, *stride, *pad, self.precision, need_x)?;
                    if let Some(gx) = g.input {
                        accumulate(&mut grads[x.0], gx);
                    }
                    if self.grad_of(*w) {
                        accumulate(&mut grads[w.0], g.weight);
                    }
                    if self.grad_of(*b) {
                        accumulate(&mut grads[b.0], g.bias);
                    }
                }
                Op::Relu(x) => accumulate(&mut grads[x.0], ops::relu_backward(&node.value, &gy)),
                Op::AvgPool { x, k } => {
                    let gx = ops::avg_pool3d_backward(&gy, *k, self.value(*x).shape());
                    accumulate(&mut grads[x.0], gx);
                }
                Op::MaxPool { x, argmax } => {
                    let gx = ops::max_pool3d_backward(&gy, argmax, self.value(*x).shape());
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Concat { a, b } => {
                    let (ga, gb) = ops::concat_backward(&gy, self.value(*a).channels());
                    if self.grad_of(*a) {
                        accumulate(&mut grads[a.0], ga);
                    }
                    if self.grad_of(*b) {
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::Dropout { x, mask } => accumulate(&mut grads[x.0], ops::dropout_backward(&gy, mask.as_deref())),
                Op::Normalize { x, std } => accumulate(&mut grads[x.0], ops::normalize_backward(&gy, std)),
            }
        }
        Ok(Gradients(grads))
    }
}

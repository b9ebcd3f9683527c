use super::ops;
use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        padding: usize,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Concat(NodeId, NodeId),
    Slice {
        input: NodeId,
        start: usize,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Upsample {
        input: NodeId,
        factor: usize,
    },
    PixelShuffle {
        input: NodeId,
        r: usize,
    },
    MeanAbsDiff(NodeId, NodeId),
    Sum(NodeId),
    /// `Σ wᵢ·xᵢ` over same-shaped operands.
    Linear(Vec<(NodeId, f64)>),
}

struct Node<T> {
    op: Op,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Records primitive operations in execution order. Because every node is
/// appended after its operands, reverse index order is a reverse topological
/// order and [`Tape::backward`] visits each node once.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A differentiable leaf (parameter or input whose gradient is wanted).
    pub fn var(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    /// The side of the kink every ReLU input and every absolute difference
    /// sits on. Two evaluations with equal signatures lie in the same smooth
    /// piece of the recorded function.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) => sig.extend(self.value(x).data().iter().map(|v| *v > T::zero())),
                Op::MeanAbsDiff(a, b) => sig.extend(
                    self.value(a)
                        .data()
                        .iter()
                        .zip(self.value(b).data())
                        .map(|(p, q)| p > q),
                ),
                _ => {}
            }
        }
        sig
    }

    pub fn conv(&mut self, input: NodeId, weight: NodeId, bias: NodeId, padding: usize) -> Result<NodeId> {
        let kernel = super::ConvKernel {
            weight: self.value(weight).clone(),
            bias: self.value(bias).clone(),
        };
        if kernel.bias.shape() != Shape::new(1, kernel.out_channels(), 1, 1) {
            return Err(Error::shape("conv", kernel.weight.shape(), kernel.bias.shape()));
        }
        let out = ops::conv2d(self.value(input), &kernel, padding)?;
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            Op::Conv {
                input,
                weight,
                bias,
                padding,
            },
            out,
            rg,
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = ops::relu(self.value(x));
        let rg = self.rg(x);
        self.push(Op::Relu(x), out, rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = ops::sigmoid(self.value(x));
        let rg = self.rg(x);
        self.push(Op::Sigmoid(x), out, rg)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::concat_channels(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Concat(a, b), out, rg))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let out = self.value(x).slice_channels(start, end)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Slice { input: x, start }, out, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), out, rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), out, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), out, rg))
    }

    /// `1 − x`, elementwise.
    pub fn one_minus(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).map(|v| T::one() - v);
        let rg = self.rg(x);
        self.push(Op::OneMinus(x), out, rg)
    }

    pub fn upsample(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        let out = ops::nearest_upsample(self.value(x), factor)?;
        let rg = self.rg(x);
        Ok(self.push(Op::Upsample { input: x, factor }, out, rg))
    }

    pub fn pixel_shuffle(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let out = ops::pixel_shuffle(self.value(x), r)?;
        let rg = self.rg(x);
        Ok(self.push(Op::PixelShuffle { input: x, r }, out, rg))
    }

    /// Mean absolute difference, a scalar node.
    pub fn mean_abs_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let diff = self.value(a).sub(self.value(b))?;
        let n = T::from_usize(diff.len().max(1)).unwrap_or_else(T::one);
        let out = Tensor::scalar(diff.data().iter().map(|v| v.abs()).sum::<T>() / n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MeanAbsDiff(a, b), out, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(Op::Sum(x), out, rg)
    }

    pub fn linear(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let (first, _) = *terms
            .first()
            .ok_or_else(|| Error::arg("linear", "empty combination"))?;
        let mut out = Tensor::zeros(self.shape(first));
        let mut rg = false;
        for &(id, w) in terms {
            let term = self.value(id);
            if term.shape() != out.shape() {
                return Err(Error::shape("linear", out.shape(), term.shape()));
            }
            out.add_assign(&term.scale(T::from_f64_lossy(w)));
            rg |= self.rg(id);
        }
        Ok(self.push(Op::Linear(terms.to_vec()), out, rg))
    }

    /// Reverse-mode sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::arg(
                "backward",
                format!("loss must be scalar, got shape {}", loss_value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(loss_value.shape()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    // leaves keep their gradient; intermediates are dropped as the sweep passes
                    grads[i] = Some(g);
                }
                Op::Conv {
                    input,
                    weight,
                    bias,
                    padding,
                } => {
                    let cg = ops::conv2d_backward(
                        self.value(*input),
                        self.value(*weight),
                        &g,
                        *padding,
                        self.rg(*input),
                    )?;
                    if let Some(dx) = cg.input {
                        self.accumulate(&mut grads, *input, dx);
                    }
                    self.accumulate(&mut grads, *weight, cg.weight);
                    self.accumulate(&mut grads, *bias, cg.bias);
                }
                Op::Relu(x) => {
                    // subgradient 0 at exactly 0
                    let dx = self.value(*x).zip_map(&g, "relu", |v, gv| if v > T::zero() { gv } else { T::zero() })?;
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = node.value.zip_map(&g, "sigmoid", |s, gv| gv * s * (T::one() - s))?;
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Concat(a, b) => {
                    let ca = self.shape(*a).channels;
                    let total = node.value.shape().channels;
                    self.accumulate(&mut grads, *a, g.slice_channels(0, ca)?);
                    self.accumulate(&mut grads, *b, g.slice_channels(ca, total)?);
                }
                Op::Slice { input, start } => {
                    let s = self.shape(*input);
                    let len = g.shape().channels;
                    let mut parts = Vec::new();
                    if *start > 0 {
                        parts.push(Tensor::zeros(s.with_channels(*start)));
                    }
                    parts.push(g);
                    if start + len < s.channels {
                        parts.push(Tensor::zeros(s.with_channels(s.channels - start - len)));
                    }
                    let mut full = parts.remove(0);
                    for p in parts {
                        full = ops::concat_channels(&full, &p)?;
                    }
                    self.accumulate(&mut grads, *input, full);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        self.accumulate(&mut grads, *a, g.mul(self.value(*b))?);
                    }
                    if self.rg(*b) {
                        self.accumulate(&mut grads, *b, g.mul(self.value(*a))?);
                    }
                }
                Op::OneMinus(x) => self.accumulate(&mut grads, *x, g.map(|v| -v)),
                Op::Upsample { input, factor } => {
                    self.accumulate(&mut grads, *input, ops::nearest_upsample_backward(&g, *factor)?);
                }
                Op::PixelShuffle { input, r } => {
                    self.accumulate(&mut grads, *input, ops::space_to_depth(&g, *r)?);
                }
                Op::MeanAbsDiff(a, b) => {
                    let seed = g.data()[0];
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let n = T::from_usize(va.len().max(1)).unwrap_or_else(T::one);
                    let da = va.zip_map(vb, "mean_abs_diff", |x, y| {
                        let d = x - y;
                        let sign = if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        seed * sign / n
                    })?;
                    if self.rg(*b) {
                        self.accumulate(&mut grads, *b, da.map(|v| -v));
                    }
                    self.accumulate(&mut grads, *a, da);
                }
                Op::Sum(x) => {
                    let seed = g.data()[0];
                    self.accumulate(&mut grads, *x, Tensor::filled(self.shape(*x), seed));
                }
                Op::Linear(terms) => {
                    for &(id, w) in terms {
                        self.accumulate(&mut grads, id, g.scale(T::from_f64_lossy(w)));
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
        if !self.rg(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Gradients of the leaves reached by a backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf; all-zero when the loss does not depend on it.
    pub fn get(&self, tape: &Tape<T>, id: NodeId) -> Tensor<T> {
        self.grads
            .get(id.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Tensor::zeros(tape.shape(id)))
    }

    pub fn take(&mut self, tape: &Tape<T>, id: NodeId) -> Tensor<T> {
        self.grads
            .get_mut(id.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(tape.shape(id)))
    }

    pub fn is_reached(&self, id: NodeId) -> bool {
        matches!(self.grads.get(id.0), Some(Some(_)))
    }
}

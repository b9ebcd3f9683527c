//! Dense 4-D tensors, the convolutional primitives built on them, and a
//! reverse-mode tape for differentiating through those primitives.

mod ops;
mod scalar;
mod tape;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use ops::{
    concat_channels, conv2d, conv2d_backward, nearest_upsample, nearest_upsample_backward, pixel_shuffle,
    relu, sigmoid, space_to_depth, ConvGrads,
};
pub use scalar::{MatRef, Scalar};
pub use tape::{Gradients, NodeId, Tape};

use crate::error::{Error, Result};

/// `(batch, channels, height, width)`. Convolution weights reuse the same
/// layout as `(out_channels, in_channels, kh, kw)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Shape {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn with_channels(self, channels: usize) -> Self {
        Shape { channels, ..self }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.batch, self.channels, self.height, self.width)
    }
}

impl From<[usize; 4]> for Shape {
    fn from(d: [usize; 4]) -> Self {
        Shape::new(d[0], d[1], d[2], d[3])
    }
}

/// Row-major 4-D array, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.len() != data.len() {
            return Err(Error::arg(
                "Tensor::from_vec",
                format!("shape {shape} needs {} values, got {}", shape.len(), data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn filled(shape: impl Into<Shape>, value: T) -> Self {
        let shape = shape.into();
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::filled(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::filled(Shape::scalar(), value)
    }

    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    for x in 0..shape.width {
                        data.push(f([b, c, y, x]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.len())
            .map(|_| T::from_f64_lossy(rng.gen_range(lo..hi)))
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape.channels + c) * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(b, c, y, x);
        self.data[i] = v;
    }

    /// The single value of a `(1,1,1,1)` tensor.
    pub fn item(&self) -> Result<T> {
        if self.len() != 1 {
            return Err(Error::arg("Tensor::item", format!("tensor of shape {} is not scalar", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(op, self.shape, other.shape));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = *a + b);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Channels `start..end` of every batch item.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.shape.channels {
            return Err(Error::arg(
                "slice_channels",
                format!("range {start}..{end} outside {} channels", self.shape.channels),
            ));
        }
        let plane = self.shape.plane();
        let out_shape = self.shape.with_channels(end - start);
        let mut data = Vec::with_capacity(out_shape.len());
        for b in 0..self.shape.batch {
            let base = b * self.shape.channels * plane;
            data.extend_from_slice(&self.data[base + start * plane..base + end * plane]);
        }
        Ok(Tensor { shape: out_shape, data })
    }

    /// One batch item as a batch-of-one tensor.
    pub fn batch_item(&self, b: usize) -> Self {
        let per = self.shape.channels * self.shape.plane();
        Tensor {
            shape: Shape { batch: 1, ..self.shape },
            data: self.data[b * per..(b + 1) * per].to_vec(),
        }
    }

    /// Concatenate along the batch axis. All items must share the remaining dims.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::arg("Tensor::stack", "no tensors to stack"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        let mut batch = 0;
        for t in items {
            if (Shape { batch: 1, ..t.shape }) != (Shape { batch: 1, ..first.shape }) {
                return Err(Error::shape("Tensor::stack", first.shape, t.shape));
            }
            batch += t.shape.batch;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape { batch, ..first.shape },
            data,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

/// Convolution weights `(out, in, kh, kw)` and a bias of shape `(1, out, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvKernel<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let w = weight.shape();
        if w.batch == 0 {
            return Err(Error::arg("ConvKernel::new", "kernel needs at least one output channel"));
        }
        if !matches!((w.height, w.width), (1, 1) | (3, 3)) {
            return Err(Error::arg(
                "ConvKernel::new",
                format!("only 1x1 and 3x3 kernels are supported, got {}x{}", w.height, w.width),
            ));
        }
        if bias.shape() != Shape::new(1, w.batch, 1, 1) {
            return Err(Error::shape("ConvKernel::new", w, bias.shape()));
        }
        Ok(ConvKernel { weight, bias })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, size: usize) -> Self {
        ConvKernel {
            weight: Tensor::zeros([out_channels, in_channels, size, size]),
            bias: Tensor::zeros([1, out_channels, 1, 1]),
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, zero bias.
    pub fn he_uniform(out_channels: usize, in_channels: usize, size: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (in_channels * size * size).max(1) as f64;
        let bound = (6.0 / fan_in).sqrt();
        ConvKernel {
            weight: Tensor::random_uniform([out_channels, in_channels, size, size], -bound, bound, rng),
            bias: Tensor::zeros([1, out_channels, 1, 1]),
        }
    }

    /// 1×1 kernel from a row-major `out × in` channel matrix.
    pub fn pointwise(out_channels: usize, in_channels: usize, matrix: &[T]) -> Result<Self> {
        let weight = Tensor::from_vec([out_channels, in_channels, 1, 1], matrix.to_vec())?;
        Ok(ConvKernel {
            weight,
            bias: Tensor::zeros([1, out_channels, 1, 1]),
        })
    }

    pub fn identity(channels: usize) -> Self {
        let mut k = Self::zeros(channels, channels, 1);
        for c in 0..channels {
            k.weight.set(c, c, 0, 0, T::one());
        }
        k
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().batch
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().channels
    }

    pub fn size(&self) -> usize {
        self.weight.shape().height
    }

    /// Padding that keeps the spatial size for this kernel.
    pub fn same_padding(&self) -> usize {
        self.size() / 2
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        self.weight.len() + if with_bias { self.bias.len() } else { 0 }
    }

    /// Output channels `start..end`.
    pub fn slice_out(&self, start: usize, end: usize) -> Result<Self> {
        Ok(ConvKernel {
            weight: self.weight.slice_channels_outer(start, end)?,
            bias: self.bias.slice_channels(start, end)?,
        })
    }

    /// Input channels `start..end`; the bias is kept unchanged.
    pub fn slice_in(&self, start: usize, end: usize) -> Result<Self> {
        Ok(ConvKernel {
            weight: self.weight.slice_channels(start, end)?,
            bias: self.bias.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> ConvKernel<U> {
        ConvKernel {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Batch-axis slice, used for selecting output channels of a weight tensor.
    fn slice_channels_outer(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.shape.batch {
            return Err(Error::arg("slice_out", format!("range {start}..{end} outside {}", self.shape.batch)));
        }
        let per = self.shape.channels * self.shape.plane();
        Ok(Tensor {
            shape: Shape { batch: end - start, ..self.shape },
            data: self.data[start * per..end * per].to_vec(),
        })
    }
}

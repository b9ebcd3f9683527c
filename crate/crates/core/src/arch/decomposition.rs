//! Block-matrix identities of the linear-compressing layer.
//!
//! Splitting a unit's input into its linear part (first `n1` channels) and its
//! nonlinear part, the 1×1 LC convolution decomposes as
//! `K^L y = K^{L,L} y^L + K^{L,NL} y^NL`, and a chain of purely linear units
//! collapses to a single 1×1 convolution whose channel matrix is the ordered
//! product of the chain.

use crate::error::{Error, Result};
use crate::tensor::{conv2d, ConvKernel, Scalar, Tensor};

pub const DECOMPOSITION_TOLERANCE: f64 = 1e-5;

fn relative_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let diff = a.sub(b)?.max_abs().to_f64().unwrap_or(f64::INFINITY);
    let scale = a.max_abs().to_f64().unwrap_or(0.0).max(1.0);
    Ok(diff / scale)
}

/// Largest relative deviation between the full 1×1 convolution and the sum of
/// its two block-split halves.
pub fn lc_decomposition_error<T: Scalar>(k_l: &ConvKernel<T>, y: &Tensor<T>, n1: usize) -> Result<f64> {
    let n = y.shape().channels;
    if k_l.size() != 1 || k_l.in_channels() != n || n1 > n {
        return Err(Error::arg(
            "lc_decomposition_check",
            format!("need a 1x1 kernel over {n} channels and n1 <= {n}"),
        ));
    }
    let full = conv2d(y, k_l, 0)?;
    let mut parts = Vec::new();
    if n1 > 0 {
        parts.push(conv2d(&y.slice_channels(0, n1)?, &k_l.slice_in(0, n1)?, 0)?);
    }
    if n1 < n {
        let mut tail = k_l.slice_in(n1, n)?;
        if n1 > 0 {
            tail.bias = Tensor::zeros(tail.bias.shape());
        }
        parts.push(conv2d(&y.slice_channels(n1, n)?, &tail, 0)?);
    }
    let mut sum = parts.remove(0);
    for p in parts {
        sum = sum.add(&p)?;
    }
    relative_error(&full, &sum)
}

pub fn lc_decomposition_check<T: Scalar>(k_l: &ConvKernel<T>, y: &Tensor<T>, n1: usize) -> bool {
    lc_decomposition_error(k_l, y, n1).is_ok_and(|e| e <= DECOMPOSITION_TOLERANCE)
}

/// Channel matrix of a 1×1 kernel, row-major `out × in`.
fn channel_matrix<T: Scalar>(k: &ConvKernel<T>) -> (usize, usize, Vec<T>) {
    (k.out_channels(), k.in_channels(), k.weight.data().to_vec())
}

fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            for j in 0..n {
                c[i * n + j] = c[i * n + j] + av * b[p * n + j];
            }
        }
    }
    c
}

/// Deviation between applying the bias-free 1×1 kernels in sequence and applying
/// the single kernel `K_k ⋯ K_2 K_1`.
pub fn linear_chain_product_error<T: Scalar>(kernels: &[ConvKernel<T>], y: &Tensor<T>) -> Result<f64> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::arg("linear_chain_product_check", "empty chain"))?;
    if kernels.iter().any(|k| k.size() != 1 || k.bias.max_abs() != T::zero()) {
        return Err(Error::arg("linear_chain_product_check", "chain must be bias-free 1x1 kernels"));
    }
    let mut chained = y.clone();
    for k in kernels {
        chained = conv2d(&chained, k, 0)?;
    }
    let (mut rows, cols, mut product) = channel_matrix(first);
    for k in &kernels[1..] {
        let (out, inner, m) = channel_matrix(k);
        if inner != rows {
            return Err(Error::shape("linear_chain_product_check", k.weight.shape(), first.weight.shape()));
        }
        product = matmul(&m, &product, out, inner, cols);
        rows = out;
    }
    let single = ConvKernel::pointwise(rows, cols, &product)?;
    relative_error(&chained, &conv2d(y, &single, 0)?)
}

pub fn linear_chain_product_check<T: Scalar>(kernels: &[ConvKernel<T>], y: &Tensor<T>) -> bool {
    linear_chain_product_error(kernels, y).is_ok_and(|e| e <= DECOMPOSITION_TOLERANCE)
}

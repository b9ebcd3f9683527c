//! Adaptive element-wise fusion of the intermediate outputs.
//!
//! Starting from `M = Y_1`, each step blends the running result with the next
//! output through a sigmoid gate computed from both:
//!
//! ```text
//! α_i = sigmoid(C_i · concat(M, Y_{i+1}))
//! M   = α_i ⊙ M + (1 − α_i) ⊙ Y_{i+1}
//! ```
//!
//! Unrolling the recursion gives explicit per-output weight maps `W_k` that are
//! non-negative and sum to one at every element, so `M` is a convex
//! combination of the `Y_k`.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::arch::BoundConv;
use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, NodeId, Scalar, Shape, Tape, Tensor};

/// Gate kernels `C_1 … C_{N−1}`, each 1×1 mapping `2c → c`.
pub type FusionParams<T> = Vec<ConvKernel<T>>;

/// Zero-initialized gates for `outputs` intermediate outputs of `channels` channels.
pub fn zero_gates<T: Scalar>(outputs: usize, channels: usize) -> FusionParams<T> {
    (1..outputs).map(|_| ConvKernel::zeros(channels, 2 * channels, 1)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionTrace<T> {
    /// `α_1 … α_{N−1}`.
    pub alphas: Vec<Tensor<T>>,
    /// `W_1 … W_N`.
    pub weights: Vec<Tensor<T>>,
}

impl<T: Scalar> FusionTrace<T> {
    /// `shape` is the output shape, used for the all-ones weight when `outputs == 1`.
    pub fn from_alphas(alphas: Vec<Tensor<T>>, outputs: usize, shape: Shape) -> Result<Self> {
        let weights = if outputs == 1 && alphas.is_empty() {
            vec![Tensor::ones(shape)]
        } else {
            derive_weights(&alphas, outputs)?
        };
        Ok(FusionTrace { alphas, weights })
    }
}

/// Gate chain on a tape. Returns the fused node and the `α` nodes.
pub fn fuse_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    outputs: &[NodeId],
    gates: &[BoundConv],
) -> Result<(NodeId, Vec<NodeId>)> {
    let (&first, rest) = outputs
        .split_first()
        .ok_or_else(|| Error::arg("fuse", "no intermediate outputs"))?;
    if gates.len() != rest.len() {
        return Err(Error::Config(format!(
            "{} outputs need {} fusion gates, got {}",
            outputs.len(),
            rest.len(),
            gates.len()
        )));
    }
    let shape = tape.shape(first);
    let mut m = first;
    let mut alphas = Vec::with_capacity(rest.len());
    for (&y, gate) in rest.iter().zip(gates) {
        if tape.shape(y) != shape {
            return Err(Error::shape("fuse", shape, tape.shape(y)));
        }
        let x = tape.concat(m, y)?;
        let pre = gate.apply(tape, x)?;
        let alpha = tape.sigmoid(pre);
        let keep = tape.mul(alpha, m)?;
        let beta = tape.one_minus(alpha);
        let take = tape.mul(beta, y)?;
        m = tape.add(keep, take)?;
        alphas.push(alpha);
    }
    Ok((m, alphas))
}

/// Fuse `outputs` with the gate kernels, returning the fused tensor and the
/// trace of gate activations and derived weight maps.
pub fn fuse<T: Scalar>(outputs: &[Tensor<T>], params: &[ConvKernel<T>]) -> Result<(Tensor<T>, FusionTrace<T>)> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = outputs.iter().map(|y| tape.constant(y.clone())).collect();
    let gates: Vec<BoundConv> = params
        .iter()
        .map(|k| BoundConv {
            weight: tape.constant(k.weight.clone()),
            bias: tape.constant(k.bias.clone()),
        })
        .collect();
    let (m, alpha_ids) = fuse_on_tape(&mut tape, &ids, &gates)?;
    let alphas = alpha_ids.iter().map(|&a| tape.value(a).clone()).collect();
    let trace = FusionTrace::from_alphas(alphas, outputs.len(), tape.shape(m))?;
    Ok((tape.value(m).clone(), trace))
}

/// Closed-form weight maps of the gate chain:
/// `W_1 = Π α_i`, `W_k = (1 − α_{k−1}) Π_{i≥k} α_i`, `W_N = 1 − α_{N−1}`.
pub fn derive_weights<T: Scalar>(alphas: &[Tensor<T>], outputs: usize) -> Result<Vec<Tensor<T>>> {
    if outputs == 0 {
        return Err(Error::arg("derive_weights", "need at least one output"));
    }
    if alphas.len() + 1 != outputs {
        return Err(Error::arg(
            "derive_weights",
            format!("{outputs} outputs need {} alphas, got {}", outputs - 1, alphas.len()),
        ));
    }
    let Some(first) = alphas.first() else {
        // a single output carries all the weight; the shape is unknown here
        return Ok(vec![Tensor::ones([1, 1, 1, 1])]);
    };
    let shape = first.shape();
    let one = Tensor::ones(shape);
    // suffix[k] = Π_{i ≥ k} α_i (0-based over alphas); suffix[len] = 1
    let mut suffix = vec![one.clone(); alphas.len() + 1];
    for k in (0..alphas.len()).rev() {
        suffix[k] = alphas[k].mul(&suffix[k + 1])?;
    }
    let mut weights = Vec::with_capacity(outputs);
    weights.push(suffix[0].clone());
    for k in 1..outputs {
        let gate = one.sub(&alphas[k - 1])?;
        weights.push(gate.mul(&suffix[k])?);
    }
    Ok(weights)
}

/// Write each weight map (batch item 0, channel 0) as an 8-bit grayscale PNG
/// scaled `[0, 1] → [0, 255]`. Files are named `weight_{k}.png`, `k` from 1.
pub fn export_weight_maps<T: Scalar>(trace: &FusionTrace<T>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(trace.weights.len());
    for (k, w) in trace.weights.iter().enumerate() {
        let s = w.shape();
        let img = GrayImage::from_fn(s.width as u32, s.height as u32, |x, y| {
            let v = w.at(0, 0, y as usize, x as usize).to_f64().unwrap_or(0.0);
            Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
        });
        let path = dir.join(format!("weight_{}.png", k + 1));
        img.save(&path).map_err(|source| Error::Image {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_output_passes_through() {
        let y = Tensor::<f64>::from_fn([1, 1, 3, 3], |[_, _, y, x]| (y * 3 + x) as f64);
        let (m, trace) = fuse(std::slice::from_ref(&y), &[]).unwrap();
        assert_eq!(m, y);
        assert!(trace.alphas.is_empty());
        assert_eq!(trace.weights.len(), 1);
        assert!(trace.weights[0].data().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn zero_gate_averages_two_outputs() {
        let a = Tensor::<f64>::from_fn([1, 1, 2, 2], |[_, _, y, x]| (y + x) as f64);
        let b = Tensor::<f64>::filled([1, 1, 2, 2], 4.0);
        let (m, trace) = fuse(&[a.clone(), b.clone()], &zero_gates(2, 1)).unwrap();
        let want = a.add(&b).unwrap().scale(0.5);
        assert_eq!(m, want);
        assert!(trace.alphas[0].data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn weights_for_half_and_saturated_gates() {
        let half = vec![Tensor::<f64>::filled([1, 1, 2, 2], 0.5)];
        let w = derive_weights(&half, 2).unwrap();
        assert!(w.iter().all(|t| t.data().iter().all(|&v| v == 0.5)));

        let ones = vec![Tensor::<f64>::ones([1, 1, 2, 2]); 3];
        let w = derive_weights(&ones, 4).unwrap();
        assert!(w[0].data().iter().all(|&v| v == 1.0));
        assert!(w[1..].iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let a = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 1, 3, 3]);
        assert!(fuse(&[a.clone(), b], &zero_gates(2, 1)).is_err());
        assert!(fuse::<f32>(&[], &[]).is_err());
        assert!(fuse(&[a.clone(), a], &[]).is_err());
    }
}

//! ResNet and DenseNet reference blocks, and the chain of rewrites that turns
//! a DenseBlock into an LCSC-style stack:
//!
//! * (a) original DenseBlock: every unit reads every earlier feature through its
//!   own kernel slice;
//! * (b) the same block written with a running concatenation (adjacent skips);
//! * (c) B-DenseBlock: a 1×1 bottleneck before each nonlinear mapping;
//! * (d) bottlenecks moved in front of the concatenation, so each unit keeps a
//!   constant width `k = b + k0`;
//! * (e) (d) with the bottleneck allocated to each branch, which is an LCSC unit
//!   whose nonlinear branch is `f ∘ B`.
//!
//! (a)→(b) and (d)→(e) preserve the function exactly. (c)→(d) changes the
//! function class and is only a shape-level rewrite.

use rand::Rng;

use crate::arch::{lcsc_block_forward, split_channels, LcscUnitParams, Unit};
use crate::error::{Error, Result};
use crate::tensor::{concat_channels, conv2d, relu, ConvKernel, Scalar, Tensor};

fn apply<T: Scalar>(k: &ConvKernel<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d(x, k, k.same_padding())
}

/// Pre-activation residual block: `y + conv2(relu(conv1(relu(y))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResBlockParams<T> {
    pub conv1: ConvKernel<T>,
    pub conv2: ConvKernel<T>,
}

impl<T: Scalar> ResBlockParams<T> {
    pub fn random(width: usize, rng: &mut impl Rng) -> Self {
        ResBlockParams {
            conv1: ConvKernel::he_uniform(width, width, 3, rng),
            conv2: ConvKernel::he_uniform(width, width, 3, rng),
        }
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        self.conv1.param_count(with_bias) + self.conv2.param_count(with_bias)
    }
}

pub fn resblock_forward<T: Scalar>(params: &ResBlockParams<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    let c = y.shape().channels;
    if params.conv1.in_channels() != c || params.conv2.out_channels() != c {
        return Err(Error::shape("resblock_forward", y.shape(), params.conv2.weight.shape()));
    }
    let h = apply(&params.conv1, &relu(y))?;
    let f = apply(&params.conv2, &relu(&h))?;
    y.add(&f)
}

/// One DenseNet unit: `concat(y, conv3(relu(B·y)))`, or without `B` when
/// there is no bottleneck.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseUnitParams<T> {
    pub nl: ConvKernel<T>,
    pub bottleneck: Option<ConvKernel<T>>,
}

impl<T: Scalar> DenseUnitParams<T> {
    pub fn input_width(&self) -> usize {
        self.bottleneck.as_ref().unwrap_or(&self.nl).in_channels()
    }

    pub fn growth(&self) -> usize {
        self.nl.out_channels()
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        self.nl.param_count(with_bias) + self.bottleneck.as_ref().map_or(0, |b| b.param_count(with_bias))
    }
}

pub fn dense_unit_forward<T: Scalar>(params: &DenseUnitParams<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape().channels != params.input_width() {
        return Err(Error::shape("dense_unit_forward", y.shape(), params.nl.weight.shape()));
    }
    let z = match &params.bottleneck {
        Some(b) => apply(b, y)?,
        None => y.clone(),
    };
    let new = apply(&params.nl, &relu(&z))?;
    concat_channels(y, &new)
}

/// A DenseBlock with adjacent skip connections (forms b and c), optionally
/// followed by a ReLU + convolution transition.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock<T> {
    pub units: Vec<DenseUnitParams<T>>,
    pub transition: Option<ConvKernel<T>>,
}

impl<T: Scalar> DenseBlock<T> {
    /// Random block with input width `k`, growth `k0`, and an optional
    /// bottleneck width `b` before every nonlinear mapping.
    pub fn random(k: usize, k0: usize, units: usize, bottleneck: Option<usize>, rng: &mut impl Rng) -> Self {
        let units = (0..units)
            .map(|p| {
                let width = k + p * k0;
                match bottleneck {
                    Some(b) => DenseUnitParams {
                        bottleneck: Some(ConvKernel::he_uniform(b, width, 1, rng)),
                        nl: ConvKernel::he_uniform(k0, b, 3, rng),
                    },
                    None => DenseUnitParams {
                        bottleneck: None,
                        nl: ConvKernel::he_uniform(k0, width, 3, rng),
                    },
                }
            })
            .collect();
        DenseBlock { units, transition: None }
    }

    pub fn output_width(&self) -> usize {
        match (&self.transition, self.units.last()) {
            (Some(t), _) => t.out_channels(),
            (None, Some(u)) => u.input_width() + u.growth(),
            (None, None) => 0,
        }
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        self.units.iter().map(|u| u.param_count(with_bias)).sum::<usize>()
            + self.transition.as_ref().map_or(0, |t| t.param_count(with_bias))
    }

    pub fn forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut f = y.clone();
        for unit in &self.units {
            f = dense_unit_forward(unit, &f)?;
        }
        match &self.transition {
            Some(t) => apply(t, &relu(&f)),
            None => Ok(f),
        }
    }
}

/// A DenseBlock unit in its original form: one kernel per earlier feature
/// (`Y_0` with `k` channels, each later `Y_j` with `k0`), summed.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSplitUnit<T> {
    pub sources: Vec<ConvKernel<T>>,
}

impl<T: Scalar> SourceSplitUnit<T> {
    fn random(k: usize, k0: usize, out: usize, n_sources: usize, rng: &mut impl Rng) -> Self {
        let sources = (0..n_sources)
            .map(|j| {
                let mut kern = ConvKernel::he_uniform(out, if j == 0 { k } else { k0 }, 3, rng);
                kern.bias = Tensor::random_uniform(kern.bias.shape(), -0.1, 0.1, rng);
                kern
            })
            .collect();
        SourceSplitUnit { sources }
    }

    fn forward(&self, features: &[Tensor<T>]) -> Result<Tensor<T>> {
        if features.len() != self.sources.len() {
            return Err(Error::arg(
                "dense_block_a",
                format!("unit has {} sources but {} features exist", self.sources.len(), features.len()),
            ));
        }
        let mut acc: Option<Tensor<T>> = None;
        for (k, y) in self.sources.iter().zip(features) {
            let term = apply(k, &relu(y))?;
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
        acc.ok_or_else(|| Error::arg("dense_block_a", "unit without sources"))
    }
}

/// Form (a) of a DenseBlock: explicit skip connections from every earlier
/// feature to every later unit and to the transition.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlockA<T> {
    pub units: Vec<SourceSplitUnit<T>>,
    pub transition: Option<SourceSplitUnit<T>>,
}

impl<T: Scalar> DenseBlockA<T> {
    pub fn random(k: usize, k0: usize, units: usize, transition_out: Option<usize>, rng: &mut impl Rng) -> Self {
        let unit_list = (0..units).map(|p| SourceSplitUnit::random(k, k0, k0, p + 1, rng)).collect();
        let transition = transition_out.map(|out| SourceSplitUnit::random(k, k0, out, units + 1, rng));
        DenseBlockA {
            units: unit_list,
            transition,
        }
    }

    /// Output: the transition applied to all features, or the concatenation of
    /// all features when there is no transition.
    pub fn forward(&self, y0: &Tensor<T>) -> Result<Tensor<T>> {
        let mut features = vec![y0.clone()];
        for unit in &self.units {
            let next = unit.forward(&features)?;
            features.push(next);
        }
        if let Some(t) = &self.transition {
            return t.forward(&features);
        }
        let mut out = features[0].clone();
        for f in &features[1..] {
            out = concat_channels(&out, f)?;
        }
        Ok(out)
    }
}

fn merge_sources<T: Scalar>(unit: &SourceSplitUnit<T>) -> Result<ConvKernel<T>> {
    let first = unit
        .sources
        .first()
        .ok_or_else(|| Error::arg("equivalence_a_to_b", "unit without sources"))?;
    let out = first.out_channels();
    let size = first.size();
    let in_total: usize = unit.sources.iter().map(|k| k.in_channels()).sum();
    let mut weight = Tensor::zeros([out, in_total, size, size]);
    let mut bias = Tensor::zeros(first.bias.shape());
    let mut offset = 0;
    for k in &unit.sources {
        if k.out_channels() != out || k.size() != size {
            return Err(Error::shape("equivalence_a_to_b", first.weight.shape(), k.weight.shape()));
        }
        for o in 0..out {
            for c in 0..k.in_channels() {
                for y in 0..size {
                    for x in 0..size {
                        weight.set(o, offset + c, y, x, k.weight.at(o, c, y, x));
                    }
                }
            }
        }
        bias = bias.add(&k.bias)?;
        offset += k.in_channels();
    }
    ConvKernel::new(weight, bias)
}

/// Rewrite a form (a) block with per-source kernels into the adjacent-skip
/// form: each unit's kernel slices are stacked along the input axis in feature
/// order, matching the running concatenation.
pub fn equivalence_a_to_b<T: Scalar>(block: &DenseBlockA<T>) -> Result<DenseBlock<T>> {
    let units = block
        .units
        .iter()
        .map(|u| {
            Ok(DenseUnitParams {
                nl: merge_sources(u)?,
                bottleneck: None,
            })
        })
        .collect::<Result<_>>()?;
    let transition = block.transition.as_ref().map(merge_sources).transpose()?;
    Ok(DenseBlock { units, transition })
}

/// Form (d) unit: bottleneck `k → b` first, then `concat(z, conv3(relu(z)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MovedBottleneckUnit<T> {
    pub bottleneck: ConvKernel<T>,
    pub nl: ConvKernel<T>,
}

impl<T: Scalar> MovedBottleneckUnit<T> {
    pub fn random(k: usize, b: usize, k0: usize, rng: &mut impl Rng) -> Self {
        let mut bottleneck = ConvKernel::he_uniform(b, k, 1, rng);
        bottleneck.bias = Tensor::random_uniform(bottleneck.bias.shape(), -0.1, 0.1, rng);
        let mut nl = ConvKernel::he_uniform(k0, b, 3, rng);
        nl.bias = Tensor::random_uniform(nl.bias.shape(), -0.1, 0.1, rng);
        MovedBottleneckUnit { bottleneck, nl }
    }

    pub fn width(&self) -> usize {
        self.bottleneck.in_channels()
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        self.bottleneck.param_count(with_bias) + self.nl.param_count(with_bias)
    }

    pub fn forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let z = apply(&self.bottleneck, y)?;
        let new = apply(&self.nl, &relu(&z))?;
        concat_channels(&z, &new)
    }
}

pub fn moved_block_forward<T: Scalar>(units: &[MovedBottleneckUnit<T>], y: &Tensor<T>) -> Result<Tensor<T>> {
    units.iter().try_fold(y.clone(), |f, u| u.forward(&f))
}

/// Shape-level (c)→(d) rewrite: keep each unit's bottleneck width `b` and
/// growth `k0`, but make the bottleneck read the constant width `k = b + k0`.
/// The kernels are freshly drawn; this is not a function-preserving map.
pub fn relocate_bottlenecks<T: Scalar>(block: &DenseBlock<T>, rng: &mut impl Rng) -> Result<Vec<MovedBottleneckUnit<T>>> {
    block
        .units
        .iter()
        .map(|u| {
            let b = u
                .bottleneck
                .as_ref()
                .ok_or_else(|| Error::arg("relocate_bottlenecks", "unit has no bottleneck"))?
                .out_channels();
            Ok(MovedBottleneckUnit::random(b + u.growth(), b, u.growth(), rng))
        })
        .collect()
}

/// Form (e) unit: an LCSC unit whose linear branch is the relocated bottleneck
/// and whose nonlinear branch is the composition `f ∘ B` (ReLU + 3×3 after the
/// same 1×1 map).
#[derive(Clone, Debug, PartialEq)]
pub struct LcscFormUnit<T> {
    pub linear: ConvKernel<T>,
    pub nonlinear_pre: ConvKernel<T>,
    pub nonlinear: ConvKernel<T>,
}

impl<T: Scalar> LcscFormUnit<T> {
    pub fn forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let lin = apply(&self.linear, y)?;
        let pre = apply(&self.nonlinear_pre, y)?;
        let new = apply(&self.nonlinear, &relu(&pre))?;
        concat_channels(&lin, &new)
    }
}

pub fn lcsc_form_forward<T: Scalar>(units: &[LcscFormUnit<T>], y: &Tensor<T>) -> Result<Tensor<T>> {
    units.iter().try_fold(y.clone(), |f, u| u.forward(&f))
}

/// Allocate each relocated bottleneck to both branches. Requires `k = b + k0`
/// for every unit so that widths stay constant.
pub fn equivalence_d_to_e<T: Scalar>(units: &[MovedBottleneckUnit<T>]) -> Result<Vec<LcscFormUnit<T>>> {
    units
        .iter()
        .map(|u| {
            let (k, b, k0) = (u.width(), u.bottleneck.out_channels(), u.nl.out_channels());
            if k != b + k0 || u.nl.in_channels() != b {
                return Err(Error::arg(
                    "equivalence_d_to_e",
                    format!("width {k} must equal bottleneck {b} plus growth {k0}"),
                ));
            }
            Ok(LcscFormUnit {
                linear: u.bottleneck.clone(),
                nonlinear_pre: u.bottleneck.clone(),
                nonlinear: u.nl.clone(),
            })
        })
        .collect()
}

/// A DenseNet core: dense blocks, each followed by a 1×1 compression back to
/// the base width.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetCore<T> {
    pub blocks: Vec<DenseBlock<T>>,
    pub compress: Vec<ConvKernel<T>>,
}

impl<T: Scalar> DenseNetCore<T> {
    pub fn param_count(&self, with_bias: bool) -> usize {
        self.blocks.iter().map(|b| b.param_count(with_bias)).sum::<usize>()
            + self.compress.iter().map(|c| c.param_count(with_bias)).sum::<usize>()
    }

    pub fn forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut f = y.clone();
        for (block, compress) in self.blocks.iter().zip(&self.compress) {
            f = apply(compress, &block.forward(&f)?)?;
        }
        Ok(f)
    }
}

/// Equal-depth ResNet, B-DenseNet, BC-DenseNet and Basic LCSCNet feature
/// extractors paired so the LCSC nonlinear width equals the DenseNet growth
/// rate (ρ = 0.5, growth = width / 2, bottleneck = width).
#[derive(Clone, Debug)]
pub struct ComparisonSuite<T> {
    pub width: usize,
    pub depth: usize,
    pub resnet: Vec<ResBlockParams<T>>,
    pub b_densenet: DenseNetCore<T>,
    pub bc_densenet: DenseNetCore<T>,
    pub bc_blocks: usize,
    pub lcsc: Vec<LcscUnitParams<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteCounts {
    pub resnet: usize,
    pub b_densenet: usize,
    pub bc_densenet: usize,
    pub lcsc: usize,
}

impl<T: Scalar> ComparisonSuite<T> {
    /// Core parameter totals (feature extraction only; the shared extractor and
    /// reconstruction head are identical across the four and left out).
    pub fn counts(&self, with_bias: bool) -> SuiteCounts {
        SuiteCounts {
            resnet: self.resnet.iter().map(|b| b.param_count(with_bias)).sum(),
            b_densenet: self.b_densenet.param_count(with_bias),
            bc_densenet: self.bc_densenet.param_count(with_bias),
            lcsc: self
                .lcsc
                .iter()
                .map(|u| {
                    u.linear.as_ref().map_or(0, |k| k.param_count(with_bias))
                        + u.nonlinear.as_ref().map_or(0, |k| k.param_count(with_bias))
                })
                .sum(),
        }
    }

    pub fn resnet_forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        self.resnet.iter().try_fold(y.clone(), |f, b| resblock_forward(b, &f))
    }

    pub fn lcsc_forward(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        lcsc_block_forward(&self.lcsc, y)
    }
}

fn dense_core<T: Scalar>(width: usize, units: usize, blocks: usize, rng: &mut impl Rng) -> DenseNetCore<T> {
    let growth = width / 2;
    let per_block = units / blocks;
    let mut dense_blocks = Vec::with_capacity(blocks);
    let mut compress = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let block = DenseBlock::random(width, growth, per_block, Some(width), rng);
        compress.push(ConvKernel::he_uniform(width, block.output_width(), 1, rng));
        dense_blocks.push(block);
    }
    DenseNetCore {
        blocks: dense_blocks,
        compress,
    }
}

/// Build the four equal-depth cores. `depth` counts nonlinear units (ResNet
/// gets `depth / 2` two-convolution blocks); BC-DenseNet splits the units into
/// `bc_blocks` equal dense blocks.
pub fn build_comparison_suite_with<T: Scalar>(
    width: usize,
    depth: usize,
    bc_blocks: usize,
    rng: &mut impl Rng,
) -> Result<ComparisonSuite<T>> {
    if width == 0 || !width.is_multiple_of(2) {
        return Err(Error::Config(format!("comparison width must be even and positive, got {width}")));
    }
    if depth < 2 || !depth.is_multiple_of(2) {
        return Err(Error::Config(format!("comparison depth must be even and >= 2, got {depth}")));
    }
    if bc_blocks == 0 || !depth.is_multiple_of(bc_blocks) {
        return Err(Error::Config(format!("{depth} units cannot be split into {bc_blocks} blocks")));
    }
    let (n1, n2) = split_channels(width, 0.5)?;
    let resnet = (0..depth / 2).map(|_| ResBlockParams::random(width, rng)).collect();
    let b_densenet = dense_core(width, depth, 1, rng);
    let bc_densenet = dense_core(width, depth, bc_blocks, rng);
    let lcsc = (0..depth)
        .map(|_| Unit {
            linear: Some(ConvKernel::he_uniform(n1, width, 1, rng)),
            nonlinear: Some(ConvKernel::he_uniform(n2, width, 3, rng)),
        })
        .collect();
    Ok(ComparisonSuite {
        width,
        depth,
        resnet,
        b_densenet,
        bc_densenet,
        bc_blocks,
        lcsc,
    })
}

/// [`build_comparison_suite_with`] using three BC blocks when the depth allows,
/// otherwise two or one.
pub fn build_comparison_suite<T: Scalar>(width: usize, depth: usize, rng: &mut impl Rng) -> Result<ComparisonSuite<T>> {
    let bc_blocks = [3, 2, 1].into_iter().find(|b| depth.is_multiple_of(*b)).unwrap_or(1);
    build_comparison_suite_with(width, depth, bc_blocks, rng)
}

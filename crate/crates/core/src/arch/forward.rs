use super::{Block, Head, HeadKind, LcscUnitParams, Network, NetworkConfig, NetworkParams, Unit};
use crate::error::{Error, Result};
use crate::fusion::{self, FusionTrace};
use crate::tensor::{ConvKernel, NodeId, Scalar, Tape, Tensor};

/// A kernel whose weight and bias live on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundConv {
    pub weight: NodeId,
    pub bias: NodeId,
}

impl BoundConv {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: NodeId) -> Result<NodeId> {
        let size = tape.shape(self.weight).height;
        tape.conv(x, self.weight, self.bias, size / 2)
    }
}

/// Register every kernel of `params` as a differentiable leaf.
pub fn bind<T: Scalar>(tape: &mut Tape<T>, params: &NetworkParams<T>) -> Network<BoundConv> {
    params.map(|k| BoundConv {
        weight: tape.var(k.weight.clone()),
        bias: tape.var(k.bias.clone()),
    })
}

/// Register every kernel as a constant (inference only).
pub fn bind_constant<T: Scalar>(tape: &mut Tape<T>, params: &NetworkParams<T>) -> Network<BoundConv> {
    params.map(|k| bind_kernel_constant(tape, k))
}

fn bind_kernel_constant<T: Scalar>(tape: &mut Tape<T>, k: &ConvKernel<T>) -> BoundConv {
    BoundConv {
        weight: tape.constant(k.weight.clone()),
        bias: tape.constant(k.bias.clone()),
    }
}

pub(crate) fn unit_on_tape<T: Scalar>(tape: &mut Tape<T>, unit: &Unit<BoundConv>, x: NodeId) -> Result<NodeId> {
    let width = tape.shape(x).channels;
    let out = match (&unit.linear, &unit.nonlinear) {
        (Some(lin), Some(nl)) => {
            let a = lin.apply(tape, x)?;
            let r = tape.relu(x);
            let b = nl.apply(tape, r)?;
            tape.concat(a, b)?
        }
        (Some(lin), None) => lin.apply(tape, x)?,
        (None, Some(nl)) => {
            let r = tape.relu(x);
            nl.apply(tape, r)?
        }
        (None, None) => return Err(Error::Config("LCSC unit has neither branch".into())),
    };
    let got = tape.shape(out);
    if got.channels != width {
        return Err(Error::shape("lcsc_unit", tape.shape(x), got));
    }
    Ok(out)
}

pub(crate) fn block_on_tape<T: Scalar>(tape: &mut Tape<T>, block: &Block<BoundConv>, x: NodeId) -> Result<NodeId> {
    let mut f = x;
    for unit in &block.units {
        f = unit_on_tape(tape, unit, f)?;
    }
    match &block.bottleneck {
        Some(bottle) => {
            let cat = tape.concat(x, f)?;
            bottle.apply(tape, cat)
        }
        None => Ok(f),
    }
}

pub(crate) fn head_on_tape<T: Scalar>(tape: &mut Tape<T>, head: &Head<BoundConv>, f: NodeId) -> Result<NodeId> {
    match (head.kind, head.convs.as_slice()) {
        (HeadKind::NearestStack, [c1, c2, c3]) => {
            let up = tape.upsample(f, head.scale)?;
            let h = c1.apply(tape, up)?;
            let h = tape.relu(h);
            let h = c2.apply(tape, h)?;
            let h = tape.relu(h);
            c3.apply(tape, h)
        }
        (HeadKind::SubPixel, [c]) if head.scale != 4 => {
            let h = c.apply(tape, f)?;
            tape.pixel_shuffle(h, head.scale)
        }
        (HeadKind::SubPixel, [c1, c2]) if head.scale == 4 => {
            let h = c1.apply(tape, f)?;
            let h = tape.pixel_shuffle(h, 2)?;
            let h = c2.apply(tape, h)?;
            tape.pixel_shuffle(h, 2)
        }
        (kind, convs) => Err(Error::Config(format!(
            "head {kind:?} at scale {} cannot use {} convolutions",
            head.scale,
            convs.len()
        ))),
    }
}

/// Node ids produced by [`network_forward_on_tape`].
#[derive(Clone, Debug)]
pub struct TapeOutput {
    /// `F_0 … F_N`.
    pub features: Vec<NodeId>,
    /// `Y_1 … Y_N`; only `Y_N` when intermediates were not requested.
    pub intermediates: Vec<NodeId>,
    /// Fusion gate activations `α_1 … α_{N−1}`.
    pub alphas: Vec<NodeId>,
    pub output: NodeId,
}

/// Full forward pass on a tape. Intermediate outputs are always produced when
/// fusion is on; otherwise only when `all_outputs` is set.
pub fn network_forward_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    net: &Network<BoundConv>,
    cfg: &NetworkConfig,
    input: NodeId,
    all_outputs: bool,
) -> Result<TapeOutput> {
    let in_shape = tape.shape(input);
    if in_shape.channels != cfg.in_channels {
        return Err(Error::shape("network_forward", in_shape, in_shape.with_channels(cfg.in_channels)));
    }
    if net.blocks.len() != cfg.blocks {
        return Err(Error::Config("parameter block count differs from configuration".into()));
    }
    let f0 = net.pfe.apply(tape, input)?;
    let mut features = vec![f0];
    for block in &net.blocks {
        let prev = *features.last().expect("features start with F_0");
        features.push(block_on_tape(tape, block, prev)?);
    }

    let want_all = all_outputs || cfg.fusion;
    let head_inputs: Vec<NodeId> = if want_all {
        features[1..].to_vec()
    } else {
        vec![*features.last().expect("at least one block")]
    };
    let mut intermediates = Vec::with_capacity(head_inputs.len());
    for fd in head_inputs {
        let x = if cfg.enhanced { tape.add(fd, f0)? } else { fd };
        intermediates.push(head_on_tape(tape, &net.head, x)?);
    }

    let (output, alphas) = if cfg.fusion {
        fusion::fuse_on_tape(tape, &intermediates, &net.fusion)?
    } else {
        (*intermediates.last().expect("at least one output"), Vec::new())
    };
    Ok(TapeOutput {
        features,
        intermediates,
        alphas,
        output,
    })
}

/// Values of a forward pass.
#[derive(Clone, Debug)]
pub struct NetworkOutput<T> {
    pub intermediates: Vec<Tensor<T>>,
    pub output: Tensor<T>,
    pub fusion: Option<FusionTrace<T>>,
}

/// Evaluate a network on `input` (values normalized to `[−1, 1]`), returning
/// all intermediate outputs `Y_1 … Y_N` and the final output.
pub fn network_forward<T: Scalar>(
    params: &NetworkParams<T>,
    cfg: &NetworkConfig,
    input: &Tensor<T>,
) -> Result<NetworkOutput<T>> {
    let mut tape = Tape::new();
    let net = bind_constant(&mut tape, params);
    let x = tape.constant(input.clone());
    let out = network_forward_on_tape(&mut tape, &net, cfg, x, true)?;
    let intermediates: Vec<Tensor<T>> = out.intermediates.iter().map(|&id| tape.value(id).clone()).collect();
    let fusion = if cfg.fusion {
        let alphas = out.alphas.iter().map(|&id| tape.value(id).clone()).collect::<Vec<_>>();
        Some(FusionTrace::from_alphas(alphas, intermediates.len(), tape.shape(out.output))?)
    } else {
        None
    };
    Ok(NetworkOutput {
        output: tape.value(out.output).clone(),
        intermediates,
        fusion,
    })
}

fn with_constant_tape<T: Scalar>(
    input: &Tensor<T>,
    run: impl FnOnce(&mut Tape<T>, NodeId) -> Result<NodeId>,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let out = run(&mut tape, x)?;
    Ok(tape.value(out).clone())
}

fn bind_unit<T: Scalar>(tape: &mut Tape<T>, unit: &LcscUnitParams<T>) -> Unit<BoundConv> {
    unit.map(&mut |k| bind_kernel_constant(tape, k))
}

/// `concat(K^L · y, K^NL · ReLU(y))`.
pub fn lcsc_unit_forward<T: Scalar>(params: &LcscUnitParams<T>, y_in: &Tensor<T>) -> Result<Tensor<T>> {
    with_constant_tape(y_in, |tape, x| {
        let unit = bind_unit(tape, params);
        unit_on_tape(tape, &unit, x)
    })
}

/// M-fold composition of [`lcsc_unit_forward`]. All units must share one width.
pub fn lcsc_block_forward<T: Scalar>(units: &[LcscUnitParams<T>], f_in: &Tensor<T>) -> Result<Tensor<T>> {
    check_unit_widths(units)?;
    with_constant_tape(f_in, |tape, x| {
        let block = Block {
            units: units.iter().map(|u| bind_unit(tape, u)).collect(),
            bottleneck: None,
        };
        block_on_tape(tape, &block, x)
    })
}

/// `bottleneck(concat(f_in, block(f_in)))`.
pub fn e_lcsc_block_forward<T: Scalar>(
    units: &[LcscUnitParams<T>],
    bottleneck: &ConvKernel<T>,
    f_in: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_unit_widths(units)?;
    let n = f_in.shape().channels;
    if bottleneck.size() != 1 || bottleneck.in_channels() != 2 * n || bottleneck.out_channels() != n {
        return Err(Error::Config(format!(
            "bottleneck must be 1x1 mapping {} -> {n} channels, got {}x{} {} -> {}",
            2 * n,
            bottleneck.size(),
            bottleneck.size(),
            bottleneck.in_channels(),
            bottleneck.out_channels()
        )));
    }
    with_constant_tape(f_in, |tape, x| {
        let block = Block {
            units: units.iter().map(|u| bind_unit(tape, u)).collect(),
            bottleneck: Some(bind_kernel_constant(tape, bottleneck)),
        };
        block_on_tape(tape, &block, x)
    })
}

fn check_unit_widths<T: Scalar>(units: &[LcscUnitParams<T>]) -> Result<()> {
    let width = |u: &LcscUnitParams<T>| {
        u.linear
            .as_ref()
            .or(u.nonlinear.as_ref())
            .map(|k| k.in_channels())
            .unwrap_or(0)
    };
    if let Some(first) = units.first() {
        let w = width(first);
        if let Some(bad) = units.iter().find(|u| width(u) != w) {
            return Err(Error::Config(format!(
                "inconsistent unit widths in block: {w} and {}",
                width(bad)
            )));
        }
    }
    Ok(())
}

/// Preliminary feature extraction: a single 3×3 convolution.
pub fn pfe_forward<T: Scalar>(pfe: &ConvKernel<T>, i_in: &Tensor<T>) -> Result<Tensor<T>> {
    crate::tensor::conv2d(i_in, pfe, pfe.same_padding())
}

pub fn head_forward<T: Scalar>(head: &Head<ConvKernel<T>>, f: &Tensor<T>) -> Result<Tensor<T>> {
    with_constant_tape(f, |tape, x| {
        let bound = Head {
            kind: head.kind,
            scale: head.scale,
            convs: head.convs.iter().map(|k| bind_kernel_constant(tape, k)).collect(),
        };
        head_on_tape(tape, &bound, x)
    })
}

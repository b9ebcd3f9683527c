use crate::arch::{bind, network_forward_on_tape, NetworkConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::{NodeId, Scalar, Tape, Tensor};

/// Mean absolute deviation over every element of the batch.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    let diff = pred.sub(target).map_err(|_| Error::shape("l1_loss", pred.shape(), target.shape()))?;
    let n = T::from_usize(diff.len().max(1)).expect("element count fits");
    Ok(diff.data().iter().map(|v| v.abs()).sum::<T>() / n)
}

/// `l1(final) + β·Σ_d l1(Y_d)`.
pub fn multi_supervised_loss<T: Scalar>(
    final_out: &Tensor<T>,
    intermediates: &[Tensor<T>],
    target: &Tensor<T>,
    beta: f64,
) -> Result<T> {
    let mut loss = l1_loss(final_out, target)?;
    let b = T::from_f64_lossy(beta);
    for y in intermediates {
        loss = loss + b * l1_loss(y, target)?;
    }
    Ok(loss)
}

/// [`multi_supervised_loss`] on a tape. Intermediate terms are skipped when
/// `beta` is zero.
pub fn multi_supervised_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    final_out: NodeId,
    intermediates: &[NodeId],
    target: NodeId,
    beta: f64,
) -> Result<NodeId> {
    let mut terms = vec![(tape.mean_abs_diff(final_out, target)?, 1.0)];
    if beta != 0.0 {
        for &y in intermediates {
            terms.push((tape.mean_abs_diff(y, target)?, beta));
        }
    }
    if terms.len() == 1 {
        return Ok(terms[0].0);
    }
    tape.linear(&terms)
}

/// Loss value and one gradient per kernel, in [`crate::arch::Network::kernels`] order.
#[derive(Clone, Debug)]
pub struct LossAndGrads<T> {
    pub loss: T,
    pub grads: NetworkParams<T>,
}

/// One forward and backward pass of the training objective. Intermediate
/// outputs are supervised when fusion is on or `beta > 0` with more than one
/// block.
pub fn loss_and_grads<T: Scalar>(
    params: &NetworkParams<T>,
    cfg: &NetworkConfig,
    input: &Tensor<T>,
    target: &Tensor<T>,
    beta: f64,
) -> Result<LossAndGrads<T>> {
    let mut tape = Tape::new();
    let net = bind(&mut tape, params);
    let x = tape.constant(input.clone());
    let t = tape.constant(target.clone());
    let multi = beta != 0.0 && (cfg.fusion || cfg.blocks > 1);
    let out = network_forward_on_tape(&mut tape, &net, cfg, x, multi)?;
    let supervised: &[NodeId] = if multi { &out.intermediates } else { &[] };
    let loss = multi_supervised_loss_on_tape(&mut tape, out.output, supervised, t, beta)?;
    let mut grads = tape.backward(loss)?;
    let loss_value = tape.value(loss).item()?;
    let grads = net.map(|b| crate::tensor::ConvKernel {
        weight: grads.take(&tape, b.weight),
        bias: grads.take(&tape, b.bias),
    });
    Ok(LossAndGrads {
        loss: loss_value,
        grads,
    })
}

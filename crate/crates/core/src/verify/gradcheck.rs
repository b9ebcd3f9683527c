//! Central finite-difference checks of reverse-mode gradients in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{bind_constant, network_forward_on_tape, NetworkConfig, NetworkParams};
use crate::error::{Error, Result};
use crate::tensor::{NodeId, Tape, Tensor};
use crate::train::{loss_and_grads, multi_supervised_loss_on_tape, param_tensors, param_tensors_mut};

pub const FD_STEP: f64 = 1e-4;
pub const GRAD_TOLERANCE: f64 = 1e-5;

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)` over paired samples.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-12)
}

/// Builds a tape expression from differentiable input nodes.
pub type Builder = dyn Fn(&mut Tape<f64>, &[NodeId]) -> Result<NodeId>;

fn projected(build: &Builder, inputs: &[Tensor<f64>], probe: &mut Option<Tensor<f64>>, rng: &mut ChaCha8Rng) -> Result<(Tape<f64>, Vec<NodeId>, NodeId)> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.var(t.clone())).collect();
    let out = build(&mut tape, &ids)?;
    let loss = if tape.shape(out).len() == 1 {
        out
    } else {
        let shape = tape.shape(out);
        let r = probe.get_or_insert_with(|| Tensor::random_uniform(shape, -1.0, 1.0, rng)).clone();
        let r = tape.constant(r);
        let prod = tape.mul(out, r)?;
        tape.sum(prod)
    };
    Ok((tape, ids, loss))
}

/// Check every input element of an expression. Non-scalar outputs are reduced
/// with a fixed random projection.
pub fn check_expression(build: &Builder, inputs: Vec<Tensor<f64>>, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = None;
    let (tape, ids, loss) = projected(build, &inputs, &mut probe, &mut rng)?;
    let grads = tape.backward(loss)?;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        let g = grads.get(&tape, *id);
        for i in 0..inputs[k].len() {
            let eval = |delta: f64, probe: &mut Option<Tensor<f64>>, rng: &mut ChaCha8Rng| -> Result<f64> {
                let mut moved = inputs.clone();
                moved[k].data_mut()[i] += delta;
                let (t, _, l) = projected(build, &moved, probe, rng)?;
                t.value(l).item()
            };
            let plus = eval(FD_STEP, &mut probe, &mut rng)?;
            let minus = eval(-FD_STEP, &mut probe, &mut rng)?;
            analytic.push(g.data()[i]);
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

/// Values in `[0.05, 1]` with random sign, so ReLU and |·| kinks are never
/// within one finite-difference step.
pub fn away_from_zero(shape: [usize; 4], rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Training loss and the kink signature of its tape.
fn loss_with_signature(
    params: &NetworkParams<f64>,
    cfg: &NetworkConfig,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    beta: f64,
) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new();
    let net = bind_constant(&mut tape, params);
    let x = tape.constant(input.clone());
    let t = tape.constant(target.clone());
    let multi = beta != 0.0 && (cfg.fusion || cfg.blocks > 1);
    let out = network_forward_on_tape(&mut tape, &net, cfg, x, multi)?;
    let supervised: &[NodeId] = if multi { &out.intermediates } else { &[] };
    let loss = multi_supervised_loss_on_tape(&mut tape, out.output, supervised, t, beta)?;
    Ok((tape.value(loss).item()?, tape.kink_signature()))
}

/// Finite-difference check of the full training loss with respect to
/// `per_kernel` weight entries and one bias entry of every kernel.
///
/// A coordinate is only used when both perturbed evaluations keep every ReLU
/// and absolute-difference input on the same side of its kink, so the
/// difference quotient measures a smooth function. Rejected coordinates are
/// redrawn; an instance where some tensor has no usable coordinate is
/// replaced by a fresh draw from the same seeded stream.
pub fn check_network(cfg: &NetworkConfig, seed: u64, per_kernel: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_INSTANCES {
        if let Some(err) = check_network_instance(cfg, seed, per_kernel, &mut rng)? {
            return Ok(err);
        }
    }
    Err(Error::Config(format!(
        "gradient check: no kink-free instance for seed {seed} in {MAX_INSTANCES} draws"
    )))
}

fn check_network_instance(
    cfg: &NetworkConfig,
    seed: u64,
    per_kernel: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    let mut params = NetworkParams::<f64>::init(cfg, seed)?;
    // non-zero gates and biases so every path carries signal
    for k in params.kernels_mut() {
        k.bias = Tensor::random_uniform(k.bias.shape(), -0.1, 0.1, rng);
    }
    for gate in &mut params.fusion {
        gate.weight = Tensor::random_uniform(gate.weight.shape(), -0.5, 0.5, rng);
    }
    let side = 5;
    let input = Tensor::random_uniform([2, cfg.in_channels, side, side], -1.0, 1.0, rng);
    let out_side = side * cfg.scale;
    let target = Tensor::random_uniform([2, cfg.in_channels, out_side, out_side], -1.0, 1.0, rng);
    let beta = 1.0;
    let analytic_all = loss_and_grads(&params, cfg, &input, &target, beta)?.grads;
    let (_, base_sig) = loss_with_signature(&params, cfg, &input, &target, beta)?;
    let grads: Vec<Tensor<f64>> = param_tensors(&analytic_all).into_iter().map(|(_, g)| g.clone()).collect();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (t, g) in grads.iter().enumerate() {
        let wanted = if t % 2 == 0 { per_kernel } else { 1 }.min(g.len());
        let mut taken = 0;
        for _ in 0..MAX_DRAWS_PER_KERNEL {
            if taken == wanted {
                break;
            }
            let i = rng.gen_range(0..g.len());
            let eval = |delta: f64| -> Result<(f64, Vec<bool>)> {
                let mut moved = params.clone();
                param_tensors_mut(&mut moved)[t].data_mut()[i] += delta;
                loss_with_signature(&moved, cfg, &input, &target, beta)
            };
            let (plus, sig_plus) = eval(FD_STEP)?;
            let (minus, sig_minus) = eval(-FD_STEP)?;
            if sig_plus != base_sig || sig_minus != base_sig {
                continue;
            }
            analytic.push(g.data()[i]);
            numeric.push((plus - minus) / (2.0 * FD_STEP));
            taken += 1;
        }
        if taken < wanted {
            return Ok(None);
        }
    }
    Ok(Some(relative_error(&analytic, &numeric)))
}

const MAX_INSTANCES: usize = 8;
const MAX_DRAWS_PER_KERNEL: usize = 16;

/// The toy network of the gradient suite: two enhanced blocks of two width-8
/// units with fusion.
pub fn toy_config() -> NetworkConfig {
    let mut cfg = NetworkConfig::uniform(2, 2, 8, 0.5, 2);
    cfg.enhanced = true;
    cfg.fusion = true;
    cfg
}

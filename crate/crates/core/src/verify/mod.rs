//! Self-verification suites behind `lcsc verify`. Each check reports the
//! measured error against its bound.

pub mod gradcheck;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arch::{
    bind_constant, lc_decomposition_error, linear_chain_product_error, network_forward, network_forward_on_tape,
    NetworkConfig, NetworkParams,
};
use crate::data::{augment_rotations, extract_patches, synthetic_image};
use crate::error::{Error, Result};
use crate::fusion::{derive_weights, fuse};
use crate::metrics::{
    conv_stack_cost, count_params, dense_unit_params, lcsc_unit_params, param_ratio_ld, param_ratio_lr,
    plain_hr_stack, DEFAULT_HR_SIZE,
};
use crate::refarch::{
    build_comparison_suite, equivalence_a_to_b, equivalence_d_to_e, lcsc_form_forward, moved_block_forward,
    relocate_bottlenecks, DenseBlock, DenseBlockA, MovedBottleneckUnit,
};
use crate::tensor::{ConvKernel, NodeId, Tape, Tensor};
use crate::train::{encode_checkpoint, train, TrainData, TrainOptions, TrainSchedule};

use gradcheck::{away_from_zero, check_expression, check_network, toy_config, Builder, GRAD_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Gradient,
    Fusion,
    Fig4,
    Lc,
    Accounting,
    Rho,
    Determinism,
    Learning,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Gradient,
        Suite::Fusion,
        Suite::Fig4,
        Suite::Lc,
        Suite::Accounting,
        Suite::Rho,
        Suite::Determinism,
        Suite::Learning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradient => "gradient",
            Suite::Fusion => "fusion",
            Suite::Fig4 => "fig4",
            Suite::Lc => "lc",
            Suite::Accounting => "accounting",
            Suite::Rho => "rho",
            Suite::Determinism => "determinism",
            Suite::Learning => "learning",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown suite '{s}' (expected one of: {}, all)", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    /// Passes when `measured <= bound`.
    pub fn at_most(suite: Suite, name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: measured <= bound,
            measured,
            bound,
        }
    }

    /// Passes when `measured >= bound`.
    pub fn at_least(suite: Suite, name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: measured >= bound,
            measured,
            bound,
        }
    }

    /// A yes/no property; measured is 1 on success.
    pub fn holds(suite: Suite, name: impl Into<String>, ok: bool) -> Self {
        Check {
            suite,
            name: name.into(),
            passed: ok,
            measured: if ok { 1.0 } else { 0.0 },
            bound: 1.0,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: measured {:.3e} bound {:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.bound
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seconds: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::Gradient => gradient_suite()?,
        Suite::Fusion => fusion_suite()?,
        Suite::Fig4 => fig4_suite(32)?,
        Suite::Lc => lc_suite()?,
        Suite::Accounting => accounting_suite()?,
        Suite::Rho => rho_suite()?,
        Suite::Determinism => determinism_suite()?,
        Suite::Learning => learning_suite()?,
    };
    Ok(SuiteReport {
        suite,
        seconds: start.elapsed().as_secs_f64(),
        checks,
    })
}

pub const GRADIENT_SEEDS: u64 = 20;

struct Primitive {
    name: &'static str,
    build: Box<Builder>,
    inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
}

fn uniform(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(shape, -1.0, 1.0, rng)
}

fn primitives() -> Vec<Primitive> {
    vec![
        Primitive {
            name: "conv3x3",
            build: Box::new(|t, x| t.conv(x[0], x[1], x[2], 1)),
            inputs: |r| vec![uniform([2, 3, 4, 4], r), uniform([4, 3, 3, 3], r), uniform([1, 4, 1, 1], r)],
        },
        Primitive {
            name: "conv1x1",
            build: Box::new(|t, x| t.conv(x[0], x[1], x[2], 0)),
            inputs: |r| vec![uniform([2, 3, 3, 3], r), uniform([2, 3, 1, 1], r), uniform([1, 2, 1, 1], r)],
        },
        Primitive {
            name: "relu",
            build: Box::new(|t, x| Ok(t.relu(x[0]))),
            inputs: |r| vec![away_from_zero([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "sigmoid",
            build: Box::new(|t, x| Ok(t.sigmoid(x[0]))),
            inputs: |r| vec![uniform([1, 2, 3, 3], r).scale(4.0)],
        },
        Primitive {
            name: "concat",
            build: Box::new(|t, x| t.concat(x[0], x[1])),
            inputs: |r| vec![uniform([1, 2, 3, 3], r), uniform([1, 3, 3, 3], r)],
        },
        Primitive {
            name: "slice",
            build: Box::new(|t, x| t.slice(x[0], 1, 4)),
            inputs: |r| vec![uniform([2, 5, 2, 2], r)],
        },
        Primitive {
            name: "add",
            build: Box::new(|t, x| t.add(x[0], x[1])),
            inputs: |r| vec![uniform([1, 2, 3, 3], r), uniform([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "sub",
            build: Box::new(|t, x| t.sub(x[0], x[1])),
            inputs: |r| vec![uniform([1, 2, 3, 3], r), uniform([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "mul",
            build: Box::new(|t, x| t.mul(x[0], x[1])),
            inputs: |r| vec![uniform([1, 2, 3, 3], r), uniform([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "one_minus",
            build: Box::new(|t, x| Ok(t.one_minus(x[0]))),
            inputs: |r| vec![uniform([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "nearest_upsample",
            build: Box::new(|t, x| t.upsample(x[0], 3)),
            inputs: |r| vec![uniform([2, 2, 2, 3], r)],
        },
        Primitive {
            name: "pixel_shuffle",
            build: Box::new(|t, x| t.pixel_shuffle(x[0], 2)),
            inputs: |r| vec![uniform([2, 8, 2, 2], r)],
        },
        Primitive {
            name: "mean_abs_diff",
            build: Box::new(|t, x| {
                let a = t.add(x[0], x[1])?;
                t.mean_abs_diff(a, x[1])
            }),
            inputs: |r| vec![away_from_zero([1, 2, 3, 3], r), uniform([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "sum",
            build: Box::new(|t, x| Ok(t.sum(x[0]))),
            inputs: |r| vec![uniform([1, 2, 3, 3], r)],
        },
        Primitive {
            name: "linear",
            build: Box::new(|t, x| t.linear(&[(x[0], 0.3), (x[1], -1.7)])),
            inputs: |r| vec![uniform([1, 2, 3, 3], r), uniform([1, 2, 3, 3], r)],
        },
    ]
}

fn gradient_suite() -> Result<Vec<Check>> {
    let s = Suite::Gradient;
    let mut checks = Vec::new();
    for p in primitives() {
        let mut worst = 0.0f64;
        for seed in 0..GRADIENT_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = (p.inputs)(&mut rng);
            worst = worst.max(check_expression(&*p.build, inputs, seed + 1000)?);
        }
        checks.push(Check::at_most(s, format!("primitive {}", p.name), worst, GRAD_TOLERANCE));
    }
    let cfg = toy_config();
    let mut worst = 0.0f64;
    for seed in 0..GRADIENT_SEEDS {
        worst = worst.max(check_network(&cfg, seed, 3)?);
    }
    checks.push(Check::at_most(s, "toy network (N=2, M=2, n=8, fusion, enhanced)", worst, GRAD_TOLERANCE));
    Ok(checks)
}

fn fusion_suite() -> Result<Vec<Check>> {
    let s = Suite::Fusion;
    let mut sum_err = 0.0f64;
    let mut range_err = 0.0f64;
    let mut envelope_err = 0.0f64;
    let mut formula_err = 0.0f64;
    let mut run = |outputs: &[Tensor<f64>], gates: &[ConvKernel<f64>]| -> Result<()> {
        let (m, trace) = fuse(outputs, gates)?;
        let weights = if outputs.len() == 1 {
            trace.weights.clone()
        } else {
            derive_weights(&trace.alphas, outputs.len())?
        };
        let shape = m.shape();
        let mut total = Tensor::zeros(shape);
        let mut combo = Tensor::zeros(shape);
        for (w, y) in weights.iter().zip(outputs) {
            total = total.add(w)?;
            combo = combo.add(&w.mul(y)?)?;
            for &v in w.data() {
                range_err = range_err.max((-v).max(v - 1.0).max(0.0));
            }
        }
        sum_err = sum_err.max(total.map(|v| v - 1.0).max_abs());
        formula_err = formula_err.max(combo.sub(&m)?.max_abs());
        for i in 0..m.len() {
            let vals = outputs.iter().map(|y| y.data()[i]);
            let lo = vals.clone().fold(f64::INFINITY, f64::min);
            let hi = vals.fold(f64::NEG_INFINITY, f64::max);
            let v = m.data()[i];
            envelope_err = envelope_err.max((lo - v).max(v - hi).max(0.0));
        }
        Ok(())
    };
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 1 + (seed as usize % 5);
        let c = 1 + (seed as usize % 2);
        let outputs: Vec<_> = (0..n).map(|_| Tensor::random_uniform([2, c, 5, 6], -2.0, 2.0, &mut rng)).collect();
        let gates: Vec<_> = (1..n)
            .map(|_| {
                let mut k = ConvKernel::he_uniform(c, 2 * c, 1, &mut rng);
                k.bias = Tensor::random_uniform(k.bias.shape(), -1.0, 1.0, &mut rng);
                k
            })
            .collect();
        run(&outputs, &gates)?;
    }
    for seed in 0..5u64 {
        let mut cfg = NetworkConfig::uniform(3, 1, 8, 0.5, 2);
        cfg.fusion = true;
        let mut params = NetworkParams::<f64>::init(&cfg, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in &mut params.fusion {
            *g = ConvKernel::he_uniform(1, 2, 1, &mut rng);
        }
        let input = Tensor::random_uniform([1, 1, 6, 6], -1.0, 1.0, &mut rng);
        let out = network_forward(&params, &cfg, &input)?;
        run(&out.intermediates, &params.fusion)?;
    }
    Ok(vec![
        Check::at_most(s, "weights sum to one", sum_err, 1e-6),
        Check::at_most(s, "weights within [0, 1]", range_err, 0.0),
        Check::at_most(s, "fused output inside per-pixel envelope", envelope_err, 1e-12),
        Check::at_most(s, "progressive fusion equals weighted sum", formula_err, 1e-6),
    ])
}

fn relative_max(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    Ok(a.sub(b)?.max_abs() / a.max_abs().max(1.0))
}

/// Dense-to-LCSC rewrites at widths 4, 8, …, `max_width` with 3 units and 20 inputs.
pub fn fig4_suite(max_width: usize) -> Result<Vec<Check>> {
    let s = Suite::Fig4;
    let mut ab = 0.0f64;
    let mut de = 0.0f64;
    let mut cd_ok = true;
    let mut width = 4;
    while width <= max_width {
        let mut rng = ChaCha8Rng::seed_from_u64(width as u64);
        let growth = width / 2;
        let block_a = DenseBlockA::<f64>::random(width, growth, 3, Some(width), &mut rng);
        let block_b = equivalence_a_to_b(&block_a)?;
        let moved: Vec<_> = (0..3)
            .map(|_| MovedBottleneckUnit::<f64>::random(width, width - growth, growth, &mut rng))
            .collect();
        let lcsc = equivalence_d_to_e(&moved)?;
        for _ in 0..20 {
            let y = Tensor::random_uniform([1, width, 5, 5], -1.0, 1.0, &mut rng);
            ab = ab.max(relative_max(&block_a.forward(&y)?, &block_b.forward(&y)?)?);
            de = de.max(relative_max(&moved_block_forward(&moved, &y)?, &lcsc_form_forward(&lcsc, &y)?)?);
        }
        let block_c = DenseBlock::<f64>::random(width, growth, 3, Some(width - growth), &mut rng);
        let relocated = relocate_bottlenecks(&block_c, &mut rng)?;
        let y = Tensor::random_uniform([1, width, 4, 4], -1.0, 1.0, &mut rng);
        cd_ok &= moved_block_forward(&relocated, &y)?.shape() == y.shape();
        let counts: Vec<_> = relocated.iter().map(|u| u.param_count(true)).collect();
        cd_ok &= counts.windows(2).all(|w| w[0] == w[1]);
        let grow: Vec<_> = block_c.units.iter().map(|u| u.param_count(false) as i64).collect();
        cd_ok &= grow.windows(3).all(|w| w[2] - w[1] == w[1] - w[0] && w[1] > w[0]);
        width *= 2;
    }
    Ok(vec![
        Check::at_most(s, "(a) to (b) outputs agree", ab, 1e-6),
        Check::at_most(s, "(d) to (e) outputs agree", de, 1e-6),
        Check::holds(s, "(c) to (d) keeps widths, constant per-unit parameters", cd_ok),
    ])
}

fn lc_suite() -> Result<Vec<Check>> {
    let s = Suite::Lc;
    let mut split = 0.0f64;
    let mut chain = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4 + (seed as usize % 4) * 4;
        let k = ConvKernel::<f64>::he_uniform(rng.gen_range(1..=n), n, 1, &mut rng);
        let y = Tensor::random_uniform([2, n, 4, 4], -1.0, 1.0, &mut rng);
        split = split.max(lc_decomposition_error(&k, &y, rng.gen_range(0..=n))?);
        let dims = [n, rng.gen_range(1..=n), rng.gen_range(1..=n), rng.gen_range(1..=n)];
        let kernels: Vec<_> = dims
            .windows(2)
            .map(|w| ConvKernel::pointwise(w[1], w[0], &(0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()))
            .collect::<Result<_>>()?;
        chain = chain.max(linear_chain_product_error(&kernels, &y)?);
    }
    Ok(vec![
        Check::at_most(s, "block-split 1x1 convolution", split, 1e-5),
        Check::at_most(s, "linear chain equals product kernel", chain, 1e-5),
    ])
}

/// Mult&Adds reported for VDSR at 1280×720.
pub const VDSR_MULT_ADDS: f64 = 612.6e9;

fn accounting_suite() -> Result<Vec<Check>> {
    let s = Suite::Accounting;
    let k = 3;
    let lr = param_ratio_lr(0.5, k);
    let mut checks = vec![
        Check::at_most(s, "ratio LR(0.5, 3) rounds to 0.5556", (lr - 0.5556).abs(), 5e-5),
        Check::holds(s, "ratio LR(0.5, 3) below 0.557", lr < 0.557),
    ];
    let mut lr_oracle = true;
    let mut ld_oracle = true;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n2 in [16usize, 32, 48] {
        let n = 64;
        let n1 = n - n2;
        let rho = n2 as f64 / n as f64;
        let k2 = (k * k) as u128;
        // count stored weights of real kernels
        let unit = ConvKernel::<f32>::zeros(n1, n, 1).param_count(false) + ConvKernel::<f32>::zeros(n2, n, k).param_count(false);
        let plain = ConvKernel::<f32>::zeros(n, n, k).param_count(false);
        let (unit, plain) = (unit as u128, plain as u128);
        lr_oracle &= unit * k2 * n as u128 == plain * (k2 * n2 as u128 + n1 as u128)
            && (param_ratio_lr(rho, k) * plain as f64 - unit as f64).abs() < 1e-9 * plain as f64;
        let dense = DenseBlock::<f32>::random(n2, n2, 40, Some(n1), &mut rng);
        let mut dense_total = 0u128;
        for (l, du) in (1..=40usize).zip(&dense.units) {
            dense_total += du.param_count(false) as u128;
            let lcsc_total = l as u128 * unit;
            let lhs = lcsc_total * (2 * k2 + l as u128 + 1) * n1 as u128 * n2 as u128;
            let rhs = dense_total * 2 * (n as u128 * n1 as u128 + k2 * n as u128 * n2 as u128);
            let formula = param_ratio_ld(l, rho, k)?;
            ld_oracle &= lhs == rhs && (formula - lcsc_total as f64 / dense_total as f64).abs() < 1e-12 * formula;
            ld_oracle &= du.param_count(false) == dense_unit_params(l, n2, n2, n1, k, false)
                && unit as usize == lcsc_unit_params(n, n2, k, false);
        }
    }
    checks.push(Check::holds(s, "ratio LR matches unit counting", lr_oracle));
    checks.push(Check::holds(s, "ratio LD matches unit counting", ld_oracle));
    let ld: Vec<f64> = (1..=300).map(|l| param_ratio_ld(l, 0.5, k)).collect::<Result<_>>()?;
    checks.push(Check::holds(s, "ratio LD strictly decreasing in depth", ld.windows(2).all(|w| w[1] < w[0])));

    let vdsr = conv_stack_cost("vdsr", &plain_hr_stack(20, 64, 1), (DEFAULT_HR_SIZE.0 * DEFAULT_HR_SIZE.1) as u64, true);
    let rel = (vdsr.mult_adds as f64 - VDSR_MULT_ADDS).abs() / VDSR_MULT_ADDS;
    checks.push(Check::at_most(s, "20-layer HR stack at 1280x720 vs 612.6G", rel, 0.005));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let suite = build_comparison_suite::<f32>(64, 30, &mut rng)?;
    let c = suite.counts(false);
    checks.push(Check::holds(
        s,
        format!(
            "core ordering LCSC {} < BC-Dense {} < ResNet {} < B-Dense {}",
            c.lcsc, c.bc_densenet, c.resnet, c.b_densenet
        ),
        c.lcsc < c.bc_densenet && c.bc_densenet < c.resnet && c.resnet < c.b_densenet,
    ));

    let mut cfg = NetworkConfig::uniform(3, 2, 8, 0.5, 4);
    cfg.enhanced = true;
    cfg.fusion = true;
    let report = count_params(&cfg)?;
    let stored = NetworkParams::<f32>::zeros(&cfg)?.param_count(true) as u64;
    checks.push(Check::holds(s, "report matches stored parameters", report.params == stored));
    Ok(checks)
}

/// Deep feature stack output `F_N` for a plain input.
fn feature_stack(params: &NetworkParams<f64>, cfg: &NetworkConfig, x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut tape = Tape::new();
    let net = bind_constant(&mut tape, params);
    let id = tape.constant(x.clone());
    let out = network_forward_on_tape(&mut tape, &net, cfg, id, false)?;
    let last: NodeId = *out.features.last().expect("features include F_0");
    Ok(tape.value(last).clone())
}

fn tiny_data(cfg: &NetworkConfig, images: u64) -> Result<TrainData> {
    let mut pairs = Vec::new();
    for i in 0..images {
        pairs.extend(extract_patches(&synthetic_image(i, 24, 24), cfg.scale, 6, 6, cfg.residual_target)?);
    }
    Ok(TrainData {
        pairs,
        val: vec![synthetic_image(99, 24, 24)],
    })
}

fn rho_suite() -> Result<Vec<Check>> {
    let s = Suite::Rho;
    let linear = NetworkConfig::uniform(3, 3, 8, 0.0, 2);
    let params = NetworkParams::<f64>::init(&linear, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let x = Tensor::random_uniform([1, 1, 6, 6], -1.0, 1.0, &mut rng);
        let y = Tensor::random_uniform([1, 1, 6, 6], -1.0, 1.0, &mut rng);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mixed = feature_stack(&params, &linear, &x.scale(a).add(&y.scale(b))?)?;
        let split = feature_stack(&params, &linear, &x)?
            .scale(a)
            .add(&feature_stack(&params, &linear, &y)?.scale(b))?;
        worst = worst.max(relative_max(&mixed, &split)?);
    }
    let plain = NetworkConfig::uniform(2, 2, 8, 1.0, 2);
    let schedule = TrainSchedule {
        initial_lr: 1e-3,
        total_epochs: 4,
        batch_size: 4,
        ..TrainSchedule::default()
    };
    let out = train(&plain, &schedule, &tiny_data(&plain, 3)?, &TrainOptions::new(2))?;
    let first = out.log.first().map_or(f64::NAN, |r| r.train_loss);
    let last = out.log.last().map_or(f64::NAN, |r| r.train_loss);
    let no_linear = NetworkParams::<f32>::zeros(&plain)?.blocks.iter().all(|b| b.units.iter().all(|u| u.linear.is_none()));
    Ok(vec![
        Check::at_most(s, "rho=0 stack superposition", worst, 1e-5),
        Check::holds(s, "rho=1 network has no linear branch", no_linear),
        Check::holds(s, format!("rho=1 network trains (loss {first:.4} -> {last:.4})"), last.is_finite() && last < first),
    ])
}

fn determinism_suite() -> Result<Vec<Check>> {
    let s = Suite::Determinism;
    let mut cfg = NetworkConfig::uniform(2, 2, 8, 0.5, 2);
    cfg.fusion = true;
    let schedule = TrainSchedule {
        initial_lr: 1e-3,
        total_epochs: 2,
        batch_size: 4,
        ..TrainSchedule::default()
    };
    let data = tiny_data(&cfg, 2)?;
    let a = train(&cfg, &schedule, &data, &TrainOptions::new(11))?;
    let b = train(&cfg, &schedule, &data, &TrainOptions::new(11))?;
    let bytes_a = encode_checkpoint(&a.last)?;
    let bytes_b = encode_checkpoint(&b.last)?;
    let reencoded = encode_checkpoint(&crate::train::decode_checkpoint(&bytes_a)?)?;
    Ok(vec![
        Check::holds(s, "identical seeds give identical checkpoints", bytes_a == bytes_b),
        Check::holds(s, "identical seeds give identical logs", a.log == b.log),
        Check::holds(s, "checkpoint re-encodes byte-identically", reencoded == bytes_a),
    ])
}

/// Desk-scale learning setup: width 16, two blocks of three units with
/// ρ = [0.75, 0.5], fusion on, ×2; about 200 patches from six synthetic
/// training images (plus rotations) and three held-out images.
pub fn desk_scale_setup() -> Result<(NetworkConfig, TrainSchedule, TrainData)> {
    let mut cfg = NetworkConfig::uniform(2, 3, 16, 0.5, 2);
    cfg.rho = vec![0.75, 0.5];
    cfg.fusion = true;
    let mut pairs = Vec::new();
    for i in 0..6 {
        for p in extract_patches(&synthetic_image(i, 128, 128), 2, 18, 9, true)? {
            pairs.extend(augment_rotations(&p)?);
        }
    }
    let val = (100..103).map(|i| synthetic_image(i, 96, 96)).collect();
    let schedule = TrainSchedule {
        initial_lr: 1e-3,
        decay_every: 20,
        decay_factor: 0.1,
        total_epochs: 30,
        batch_size: 16,
        beta: 1.0,
    };
    Ok((cfg, schedule, TrainData { pairs, val }))
}

pub const LEARNING_MARGIN_DB: f64 = 0.3;

fn learning_suite() -> Result<Vec<Check>> {
    let s = Suite::Learning;
    let (cfg, schedule, data) = desk_scale_setup()?;
    let out = train(&cfg, &schedule, &data, &TrainOptions::new(1))?;
    let last = out.log.last().ok_or_else(|| Error::Dataset("no epochs ran".into()))?;
    let gain = last.val_psnr.unwrap_or(f64::NEG_INFINITY) - last.val_bicubic_psnr.unwrap_or(f64::INFINITY);
    Ok(vec![Check::at_least(s, "held-out PSNR gain over bicubic (dB)", gain, LEARNING_MARGIN_DB)])
}

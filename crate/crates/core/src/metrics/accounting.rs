use std::fmt::Write as _;

use serde::Serialize;

use crate::arch::{HeadKind, KernelSpec, Network, NetworkConfig};
use crate::error::{Error, Result};

/// Output size used for Mult&Adds unless another is given: 1280×720.
pub const DEFAULT_HR_SIZE: (usize, usize) = (1280, 720);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostLine {
    pub label: String,
    pub params: u64,
    /// Spatial positions each application of the layers runs at.
    pub positions: u64,
    pub mult_adds: u64,
}

/// Parameter and multiply-accumulate totals with a per-module breakdown.
/// Totals always equal the sum of the lines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub params: u64,
    pub mult_adds: u64,
    pub hr_size: (usize, usize),
    pub with_bias: bool,
    pub lines: Vec<CostLine>,
}

impl CostReport {
    fn from_lines(lines: Vec<CostLine>, hr_size: (usize, usize), with_bias: bool) -> Self {
        CostReport {
            params: lines.iter().map(|l| l.params).sum(),
            mult_adds: lines.iter().map(|l| l.mult_adds).sum(),
            hr_size,
            with_bias,
            lines,
        }
    }

    pub fn to_table(&self) -> String {
        let label_w = self.lines.iter().map(|l| l.label.len()).chain([5]).max().unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<label_w$}  {:>12}  {:>10}  {:>16}",
            "module", "params", "positions", "mult_adds"
        );
        for l in &self.lines {
            let _ = writeln!(
                out,
                "{:<label_w$}  {:>12}  {:>10}  {:>16}",
                l.label, l.params, l.positions, l.mult_adds
            );
        }
        let _ = writeln!(out, "{:<label_w$}  {:>12}  {:>10}  {:>16}", "total", self.params, "", self.mult_adds);
        let _ = writeln!(
            out,
            "bias {}; HR {}x{}; {} mult-adds",
            if self.with_bias { "included" } else { "excluded" },
            self.hr_size.0,
            self.hr_size.1,
            giga(self.mult_adds)
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost report serializes")
    }
}

/// `612.6G`-style rendering.
pub fn giga(ops: u64) -> String {
    format!("{:.1}G", ops as f64 / 1e9)
}

fn line(label: impl Into<String>, specs: &[KernelSpec], positions: u64, repeats: u64, with_bias: bool) -> CostLine {
    let params: u64 = specs.iter().map(|s| s.params(with_bias) as u64).sum();
    CostLine {
        label: label.into(),
        params: params * u64::from(repeats > 0),
        positions,
        mult_adds: params * positions * repeats.max(1),
    }
}

/// Full cost breakdown of a network. LR-space layers run at
/// `HR pixels / scale²` positions. When the network emits every intermediate
/// output, the shared head's extra applications and the fusion gates are
/// reported on separate lines.
pub fn cost_report(cfg: &NetworkConfig, hr_size: (usize, usize), with_bias: bool) -> Result<CostReport> {
    let layout = Network::<KernelSpec>::layout(cfg)?;
    let hr = (hr_size.0 * hr_size.1) as u64;
    let s = cfg.scale as u64;
    let lr = hr / (s * s);
    let mut lines = vec![line("pfe", &[layout.pfe], lr, 1, with_bias)];
    for (d, block) in layout.blocks.iter().enumerate() {
        let units: Vec<KernelSpec> = block
            .units
            .iter()
            .flat_map(|u| u.linear.iter().chain(u.nonlinear.iter()).copied())
            .collect();
        lines.push(line(format!("block{} units", d + 1), &units, lr, 1, with_bias));
        if let Some(b) = block.bottleneck {
            lines.push(line(format!("block{} bottleneck", d + 1), &[b], lr, 1, with_bias));
        }
    }
    let head = &layout.head.convs;
    let head_lines: Vec<(String, Vec<KernelSpec>, u64)> = match layout.head.kind {
        HeadKind::NearestStack => vec![("head".into(), head.clone(), hr)],
        HeadKind::SubPixel if cfg.scale == 4 => vec![
            ("head stage1".into(), vec![head[0]], lr),
            ("head stage2".into(), vec![head[1]], hr / 4),
        ],
        HeadKind::SubPixel => vec![("head".into(), head.clone(), lr)],
    };
    for (label, specs, positions) in &head_lines {
        lines.push(line(label.clone(), specs, *positions, 1, with_bias));
    }
    if cfg.fusion && cfg.blocks > 1 {
        let extra = (cfg.blocks - 1) as u64;
        for (label, specs, positions) in &head_lines {
            lines.push(CostLine {
                mult_adds: line("", specs, *positions, 1, with_bias).mult_adds * extra,
                label: format!("{label} x{extra} more outputs"),
                params: 0,
                positions: *positions,
            });
        }
        lines.push(line("fusion gates", &layout.fusion, hr, 1, with_bias));
    }
    Ok(CostReport::from_lines(lines, hr_size, with_bias))
}

/// Parameter totals (biases included) with Mult&Adds at 1280×720.
pub fn count_params(cfg: &NetworkConfig) -> Result<CostReport> {
    cost_report(cfg, DEFAULT_HR_SIZE, true)
}

pub fn mult_adds(cfg: &NetworkConfig, hr_size: (usize, usize)) -> Result<u64> {
    Ok(cost_report(cfg, hr_size, true)?.mult_adds)
}

/// Cost of a plain stack of same-padded convolutions all running at `positions`.
pub fn conv_stack_cost(label: &str, layers: &[KernelSpec], positions: u64, with_bias: bool) -> CostLine {
    line(label, layers, positions, 1, with_bias)
}

/// `depth` 3×3 layers of `width` channels between `channels`-channel input
/// and output, all at HR resolution (the VDSR layout).
pub fn plain_hr_stack(depth: usize, width: usize, channels: usize) -> Vec<KernelSpec> {
    let mut layers = vec![KernelSpec::new(width, channels, 3)];
    layers.extend(std::iter::repeat_n(KernelSpec::new(width, width, 3), depth.saturating_sub(2)));
    layers.push(KernelSpec::new(channels, width, 3));
    layers
}

/// Weights (and biases) of one LCSC unit of width `n` with `n2` nonlinear
/// channels and `k×k` nonlinear kernels.
pub fn lcsc_unit_params(n: usize, n2: usize, k: usize, with_bias: bool) -> usize {
    let n1 = n - n2;
    let bias = if with_bias { n } else { 0 };
    n * n1 + k * k * n * n2 + bias
}

/// One `k×k` convolution of `n → n` channels.
pub fn plain_conv_params(n: usize, k: usize, with_bias: bool) -> usize {
    n * n * k * k + if with_bias { n } else { 0 }
}

/// Unit `p` (from 1) of a bottlenecked DenseBlock with base width `base`,
/// growth `growth` and bottleneck width `bottleneck`.
pub fn dense_unit_params(p: usize, base: usize, growth: usize, bottleneck: usize, k: usize, with_bias: bool) -> usize {
    let input = base + (p - 1) * growth;
    let bias = if with_bias { bottleneck + growth } else { 0 };
    input * bottleneck + k * k * bottleneck * growth + bias
}

/// LCSC-to-plain-layer parameter ratio `ρ + (1 − ρ)/k²`.
pub fn param_ratio_lr(rho0: f64, k: usize) -> f64 {
    let k2 = (k * k) as f64;
    rho0 + (1.0 - rho0) / k2
}

/// LCSC-to-DenseNet parameter ratio over `L` units:
/// `2/(2k² + L + 1) · (1/ρ + k²/(1 − ρ))`.
pub fn param_ratio_ld(l: usize, rho0: f64, k: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::arg("param_ratio_ld", "need at least one unit"));
    }
    ratio_ld(l as f64, rho0, k)
}

/// Block-wise DenseNet ratio: `N` blocks of `L/N` units each.
pub fn param_ratio_ld_blockwise(l: usize, blocks: usize, rho0: f64, k: usize) -> Result<f64> {
    if l == 0 || blocks == 0 {
        return Err(Error::arg("param_ratio_ld", "need at least one unit and one block"));
    }
    ratio_ld(l as f64 / blocks as f64, rho0, k)
}

fn ratio_ld(l: f64, rho0: f64, k: usize) -> Result<f64> {
    if !(rho0 > 0.0 && rho0 < 1.0) {
        return Err(Error::arg("param_ratio_ld", format!("rho {rho0} must lie strictly between 0 and 1")));
    }
    let k2 = (k * k) as f64;
    Ok(2.0 / (2.0 * k2 + l + 1.0) * (1.0 / rho0 + k2 / (1.0 - rho0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_counts() {
        assert_eq!(lcsc_unit_params(64, 32, 3, false), 20_480);
        assert_eq!(lcsc_unit_params(64, 64, 3, false), 64 * 9 * 64);
        assert_eq!(plain_conv_params(64, 3, false), 36_864);
    }

    #[test]
    fn pointwise_layer_mult_adds() {
        let c = 5;
        let cost = conv_stack_cost("1x1", &[KernelSpec::new(c, c, 1)], 1, true);
        assert_eq!(cost.mult_adds, (c * c + c) as u64);
    }

    #[test]
    fn ratio_formulas() {
        assert!((param_ratio_lr(0.5, 3) - 5.0 / 9.0).abs() < 1e-12);
        assert_eq!(param_ratio_lr(1.0, 3), 1.0);
        let l = 7;
        assert!((param_ratio_ld(l, 0.5, 1).unwrap() - 8.0 / (l as f64 + 3.0)).abs() < 1e-12);
        assert!(param_ratio_ld(4, 0.0, 3).is_err());
        assert!(param_ratio_ld(4, 1.0, 3).is_err());
    }

    #[test]
    fn report_totals_match_lines() {
        let mut cfg = NetworkConfig::uniform(3, 2, 8, 0.5, 3);
        cfg.fusion = true;
        cfg.enhanced = true;
        let r = count_params(&cfg).unwrap();
        assert_eq!(r.params, r.lines.iter().map(|l| l.params).sum::<u64>());
        assert!(r.to_table().contains("fusion gates"));
        assert!(r.to_json().contains("\"mult_adds\""));
    }
}

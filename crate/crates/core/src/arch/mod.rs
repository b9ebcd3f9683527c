//! The LCSCNet family: LCSC units and blocks, the enhanced block with its
//! long-term concatenation, the preliminary feature extractor, the shared
//! upsampling/reconstruction head, and whole-network assembly.

mod decomposition;
mod forward;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use decomposition::{
    lc_decomposition_check, lc_decomposition_error, linear_chain_product_check, linear_chain_product_error,
    DECOMPOSITION_TOLERANCE,
};
pub use forward::{
    bind, bind_constant, e_lcsc_block_forward, head_forward, lcsc_block_forward, lcsc_unit_forward, network_forward,
    network_forward_on_tape, pfe_forward, BoundConv, NetworkOutput, TapeOutput,
};

use crate::error::{Error, Result};
use crate::tensor::{ConvKernel, Scalar};

/// Upsampling/reconstruction head variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Nearest-neighbour upsampling followed by conv-ReLU, conv-ReLU, conv.
    NearestStack,
    /// Sub-pixel convolution (conv then pixel shuffle); ×4 uses two ×2 stages.
    SubPixel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub blocks: usize,
    pub units_per_block: usize,
    pub width: usize,
    /// Fraction of each unit's output produced by the nonlinear branch, one per block.
    pub rho: Vec<f64>,
    #[serde(default)]
    pub enhanced: bool,
    pub scale: usize,
    #[serde(default = "default_head")]
    pub head: HeadKind,
    #[serde(default)]
    pub fusion: bool,
    /// Learn `HR − bicubic(LR)` instead of HR directly.
    #[serde(default = "default_true")]
    pub residual_target: bool,
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
}

fn default_head() -> HeadKind {
    HeadKind::NearestStack
}

fn default_true() -> bool {
    true
}

fn default_in_channels() -> usize {
    1
}

impl NetworkConfig {
    /// A small luminance configuration with a uniform ρ.
    pub fn uniform(blocks: usize, units_per_block: usize, width: usize, rho: f64, scale: usize) -> Self {
        NetworkConfig {
            blocks,
            units_per_block,
            width,
            rho: vec![rho; blocks],
            enhanced: false,
            scale,
            head: HeadKind::NearestStack,
            fusion: false,
            residual_target: true,
            in_channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.units_per_block == 0 {
            return Err(Error::Config("blocks and units_per_block must be >= 1".into()));
        }
        if self.width == 0 || self.in_channels == 0 {
            return Err(Error::Config("width and in_channels must be >= 1".into()));
        }
        if self.rho.len() != self.blocks {
            return Err(Error::Config(format!(
                "rho list has {} entries but there are {} blocks",
                self.rho.len(),
                self.blocks
            )));
        }
        for &rho in &self.rho {
            split_channels(self.width, rho)?;
        }
        if !matches!(self.scale, 2..=4) {
            return Err(Error::Config(format!("unsupported scale {} (expected 2, 3 or 4)", self.scale)));
        }
        Ok(())
    }

    /// `(n1, n2)` for block `d` (0-based).
    pub fn split(&self, block: usize) -> Result<(usize, usize)> {
        let rho = *self
            .rho
            .get(block)
            .ok_or_else(|| Error::Config(format!("no rho for block {block}")))?;
        split_channels(self.width, rho)
    }
}

/// Split `n` output channels into `(n1, n2) = (n − ρn, ρn)`. Rejects ρ outside
/// `[0, 1]` and any ρ for which `ρ·n` is not an integer.
pub fn split_channels(n: usize, rho: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho {rho} outside [0, 1]")));
    }
    let exact = rho * n as f64;
    let n2 = exact.round();
    if (exact - n2).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "rho not integral: rho = {rho} times width {n} gives {exact} nonlinear channels"
        )));
    }
    let n2 = n2 as usize;
    Ok((n - n2, n2))
}

/// One LCSC unit: a 1×1 linear-compressing branch (`n → n1`) in parallel with a
/// ReLU + 3×3 branch (`n → n2`). A branch with zero output channels is absent.
#[derive(Clone, Debug, PartialEq)]
pub struct Unit<K> {
    pub linear: Option<K>,
    pub nonlinear: Option<K>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<K> {
    pub units: Vec<Unit<K>>,
    /// `2n → n` 1×1 bottleneck of an enhanced block.
    pub bottleneck: Option<K>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head<K> {
    pub kind: HeadKind,
    pub scale: usize,
    pub convs: Vec<K>,
}

/// The full parameter layout of a network, generic over what sits at each
/// kernel slot (weights, tape bindings, shape descriptors).
#[derive(Clone, Debug, PartialEq)]
pub struct Network<K> {
    pub pfe: K,
    pub blocks: Vec<Block<K>>,
    /// Shared by every intermediate output.
    pub head: Head<K>,
    /// `N − 1` fusion gates.
    pub fusion: Vec<K>,
}

pub type LcscUnitParams<T> = Unit<ConvKernel<T>>;
pub type NetworkParams<T> = Network<ConvKernel<T>>;

/// Shape of one kernel slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub size: usize,
}

impl KernelSpec {
    pub const fn new(out_channels: usize, in_channels: usize, size: usize) -> Self {
        KernelSpec {
            out_channels,
            in_channels,
            size,
        }
    }

    pub fn weights(&self) -> usize {
        self.out_channels * self.in_channels * self.size * self.size
    }

    pub fn params(&self, with_bias: bool) -> usize {
        self.weights() + if with_bias { self.out_channels } else { 0 }
    }
}

impl<K> Unit<K> {
    pub fn map<U>(&self, f: &mut impl FnMut(&K) -> U) -> Unit<U> {
        Unit {
            linear: self.linear.as_ref().map(&mut *f),
            nonlinear: self.nonlinear.as_ref().map(&mut *f),
        }
    }
}

impl<K> Network<K> {
    /// Structure-preserving map; visits slots in [`Network::kernels`] order.
    pub fn map<U>(&self, mut f: impl FnMut(&K) -> U) -> Network<U> {
        let pfe = f(&self.pfe);
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                units: b.units.iter().map(|u| u.map(&mut f)).collect(),
                bottleneck: b.bottleneck.as_ref().map(&mut f),
            })
            .collect();
        let head = Head {
            kind: self.head.kind,
            scale: self.head.scale,
            convs: self.head.convs.iter().map(&mut f).collect(),
        };
        let fusion = self.fusion.iter().map(&mut f).collect();
        Network {
            pfe,
            blocks,
            head,
            fusion,
        }
    }

    /// Every kernel slot with a stable name, in canonical order.
    pub fn named_kernels(&self) -> Vec<(String, &K)> {
        let mut out = vec![("pfe".to_string(), &self.pfe)];
        for (d, block) in self.blocks.iter().enumerate() {
            for (j, unit) in block.units.iter().enumerate() {
                if let Some(k) = &unit.linear {
                    out.push((format!("block{d}.unit{j}.linear"), k));
                }
                if let Some(k) = &unit.nonlinear {
                    out.push((format!("block{d}.unit{j}.nonlinear"), k));
                }
            }
            if let Some(k) = &block.bottleneck {
                out.push((format!("block{d}.bottleneck"), k));
            }
        }
        for (i, k) in self.head.convs.iter().enumerate() {
            out.push((format!("head.conv{i}"), k));
        }
        for (i, k) in self.fusion.iter().enumerate() {
            out.push((format!("fusion.gate{i}"), k));
        }
        out
    }

    pub fn kernels(&self) -> Vec<&K> {
        self.named_kernels().into_iter().map(|(_, k)| k).collect()
    }

    pub fn kernels_mut(&mut self) -> Vec<&mut K> {
        let mut out = vec![&mut self.pfe];
        for block in &mut self.blocks {
            for unit in &mut block.units {
                out.extend(unit.linear.as_mut());
                out.extend(unit.nonlinear.as_mut());
            }
            out.extend(block.bottleneck.as_mut());
        }
        out.extend(self.head.convs.iter_mut());
        out.extend(self.fusion.iter_mut());
        out
    }
}

impl Network<KernelSpec> {
    /// Kernel shapes implied by a configuration.
    pub fn layout(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.width;
        let c = cfg.in_channels;
        let s = cfg.scale;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for d in 0..cfg.blocks {
            let (n1, n2) = cfg.split(d)?;
            let unit = Unit {
                linear: (n1 > 0).then(|| KernelSpec::new(n1, n, 1)),
                nonlinear: (n2 > 0).then(|| KernelSpec::new(n2, n, 3)),
            };
            blocks.push(Block {
                units: vec![unit; cfg.units_per_block],
                bottleneck: cfg.enhanced.then(|| KernelSpec::new(n, 2 * n, 1)),
            });
        }
        let convs = match (cfg.head, s) {
            (HeadKind::NearestStack, _) => vec![KernelSpec::new(n, n, 3), KernelSpec::new(n, n, 3), KernelSpec::new(c, n, 3)],
            (HeadKind::SubPixel, 4) => vec![KernelSpec::new(4 * n, n, 3), KernelSpec::new(4 * c, n, 3)],
            (HeadKind::SubPixel, _) => vec![KernelSpec::new(c * s * s, n, 3)],
        };
        let fusion_gates = if cfg.fusion { cfg.blocks - 1 } else { 0 };
        Ok(Network {
            pfe: KernelSpec::new(n, c, 3),
            blocks,
            head: Head {
                kind: cfg.head,
                scale: s,
                convs,
            },
            fusion: vec![KernelSpec::new(c, 2 * c, 1); fusion_gates],
        })
    }
}

impl<T: Scalar> NetworkParams<T> {
    /// He-uniform weights, zero biases, and zero fusion gates (every gate starts
    /// at α = 0.5).
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        let layout = Network::layout(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = layout.map(|k| ConvKernel::he_uniform(k.out_channels, k.in_channels, k.size, &mut rng));
        for gate in &mut params.fusion {
            *gate = ConvKernel::zeros(gate.out_channels(), gate.in_channels(), 1);
        }
        Ok(params)
    }

    /// All-zero weights and biases in the layout of `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self> {
        Ok(Network::layout(cfg)?.map(|k| ConvKernel::zeros(k.out_channels, k.in_channels, k.size)))
    }

    /// Check every kernel against the layout implied by `cfg`.
    pub fn check_layout(&self, cfg: &NetworkConfig) -> Result<()> {
        let layout = Network::layout(cfg)?;
        let want = layout.named_kernels();
        let have = self.named_kernels();
        if want.len() != have.len() {
            return Err(Error::Config(format!(
                "parameter set has {} kernels, configuration needs {}",
                have.len(),
                want.len()
            )));
        }
        for ((name, spec), (_, k)) in want.iter().zip(&have) {
            let got = KernelSpec::new(k.out_channels(), k.in_channels(), k.size());
            if got != **spec || k.bias.len() != spec.out_channels {
                return Err(Error::Config(format!("{name}: expected {spec:?}, found {got:?}")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self, with_bias: bool) -> usize {
        self.kernels().iter().map(|k| k.param_count(with_bias)).sum()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        self.map(|k| k.cast())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_split_rejects_fractional_channels() {
        assert_eq!(split_channels(64, 0.5).unwrap(), (32, 32));
        assert_eq!(split_channels(64, 0.71875).unwrap(), (18, 46));
        assert_eq!(split_channels(8, 0.0).unwrap(), (8, 0));
        assert_eq!(split_channels(8, 1.0).unwrap(), (0, 8));
        let err = split_channels(10, 0.25).unwrap_err().to_string();
        assert!(err.contains("rho not integral"), "{err}");
        assert!(split_channels(8, 1.5).is_err());
    }

    #[test]
    fn layout_matches_config() {
        let mut cfg = NetworkConfig::uniform(3, 2, 8, 0.5, 3);
        cfg.enhanced = true;
        cfg.fusion = true;
        let layout = Network::layout(&cfg).unwrap();
        assert_eq!(layout.blocks.len(), 3);
        assert!(layout.blocks.iter().all(|b| b.units.len() == 2 && b.bottleneck.is_some()));
        assert_eq!(layout.fusion.len(), 2);
        assert_eq!(layout.fusion[0], KernelSpec::new(1, 2, 1));
        assert_eq!(layout.head.convs.len(), 3);

        cfg.head = HeadKind::SubPixel;
        cfg.scale = 4;
        let layout = Network::layout(&cfg).unwrap();
        assert_eq!(layout.head.convs, vec![KernelSpec::new(32, 8, 3), KernelSpec::new(4, 8, 3)]);
    }

    #[test]
    fn kernels_and_map_agree_on_order() {
        let mut cfg = NetworkConfig::uniform(2, 2, 4, 0.5, 2);
        cfg.enhanced = true;
        cfg.fusion = true;
        let params = NetworkParams::<f64>::init(&cfg, 7).unwrap();
        let mut visited = Vec::new();
        let _ = params.map(|k| visited.push(k.clone()));
        let listed: Vec<_> = params.kernels().into_iter().cloned().collect();
        assert_eq!(visited, listed);
        let mut copy = params.clone();
        assert_eq!(copy.kernels_mut().len(), listed.len());
        params.check_layout(&cfg).unwrap();
    }

    #[test]
    fn init_is_deterministic_and_gates_start_at_zero() {
        let mut cfg = NetworkConfig::uniform(3, 1, 4, 0.25, 2);
        cfg.fusion = true;
        let a = NetworkParams::<f32>::init(&cfg, 42).unwrap();
        let b = NetworkParams::<f32>::init(&cfg, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.fusion.iter().all(|g| g.weight.max_abs() == 0.0));
        assert_ne!(a, NetworkParams::<f32>::init(&cfg, 43).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = NetworkConfig::uniform(2, 1, 8, 0.5, 2);
        cfg.rho = vec![0.5];
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::uniform(2, 1, 8, 0.5, 5);
        assert!(cfg.validate().is_err());
        cfg.scale = 2;
        cfg.rho = vec![0.3, 0.5];
        assert!(cfg.validate().unwrap_err().to_string().contains("rho not integral"));
    }
}

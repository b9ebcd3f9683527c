//! Checkpoint container.
//!
//! ```text
//! LCSCNET-CKPT v1 <manifest bytes>\n
//! <manifest: JSON object>
//! <payload: little-endian f32 arrays in manifest order>
//! ```
//!
//! The manifest holds the format version, network configuration, seed, epoch,
//! optimizer step and hyperparameters, every tensor's name, shape and byte
//! offset, and the SHA-256 of the payload. Tensors are the network parameters
//! (`<kernel>.weight`, `<kernel>.bias`) followed by the Adam first and second
//! moments (`adam.m.*`, `adam.v.*`) in the same order.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{AdamHyper, AdamState};
use crate::arch::{NetworkConfig, NetworkParams};
use crate::error::{CheckpointError, Error, Result};
use crate::tensor::{Shape, Tensor};

pub const CHECKPOINT_MAGIC: &str = "LCSCNET-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters, configuration and optimizer state of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub seed: u64,
    pub epoch: usize,
    pub params: NetworkParams<f32>,
    pub optimizer: AdamState<f32>,
}

impl Checkpoint {
    pub fn new(config: NetworkConfig, seed: u64, params: NetworkParams<f32>, hyper: AdamHyper) -> Self {
        let optimizer = AdamState::new(param_tensors(&params).into_iter().map(|(_, t)| t), hyper);
        Checkpoint {
            config,
            seed,
            epoch: 0,
            params,
            optimizer,
        }
    }
}

/// Every parameter tensor with its name, in canonical order.
pub fn param_tensors<T>(params: &NetworkParams<T>) -> Vec<(String, &Tensor<T>)> {
    params
        .named_kernels()
        .into_iter()
        .flat_map(|(name, k)| [(format!("{name}.weight"), &k.weight), (format!("{name}.bias"), &k.bias)])
        .collect()
}

/// Mutable counterpart of [`param_tensors`] (same order, without names).
pub fn param_tensors_mut<T>(params: &mut NetworkParams<T>) -> Vec<&mut Tensor<T>> {
    params
        .kernels_mut()
        .into_iter()
        .flat_map(|k| [&mut k.weight, &mut k.bias])
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 4],
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerEntry {
    step: u64,
    hyper: AdamHyper,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    config: NetworkConfig,
    seed: u64,
    epoch: usize,
    optimizer: OptimizerEntry,
    tensors: Vec<TensorEntry>,
    payload_bytes: u64,
    sha256: String,
}

fn named_state(ckpt: &Checkpoint) -> Vec<(String, &Tensor<f32>)> {
    let params = param_tensors(&ckpt.params);
    let mut all = params.clone();
    for (prefix, moments) in [("adam.m", &ckpt.optimizer.m), ("adam.v", &ckpt.optimizer.v)] {
        all.extend(params.iter().zip(moments).map(|((name, _), t)| (format!("{prefix}.{name}"), t)));
    }
    all
}

/// Serialize to bytes. Identical checkpoints always produce identical bytes.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let params = param_tensors(&ckpt.params);
    let moments_fit = |ms: &[Tensor<f32>]| {
        ms.len() == params.len() && ms.iter().zip(&params).all(|(m, (_, p))| m.shape() == p.shape())
    };
    if !moments_fit(&ckpt.optimizer.m) || !moments_fit(&ckpt.optimizer.v) {
        return Err(CheckpointError::Layout("optimizer moments do not match parameters".into()).into());
    }
    let state = named_state(ckpt);
    let mut payload = Vec::new();
    let mut tensors = Vec::with_capacity(state.len());
    for (name, t) in &state {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().dims(),
            offset: payload.len() as u64,
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        version: CHECKPOINT_VERSION,
        config: ckpt.config.clone(),
        seed: ckpt.seed,
        epoch: ckpt.epoch,
        optimizer: OptimizerEntry {
            step: ckpt.optimizer.step,
            hyper: ckpt.optimizer.hyper,
        },
        tensors,
        payload_bytes: payload.len() as u64,
        sha256: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
    let mut out = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} {}\n", json.len()).into_bytes();
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> Error {
    CheckpointError::CorruptHeader(msg.into()).into()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let nl = bytes
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| corrupt("header is not text"))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(CHECKPOINT_MAGIC) {
        return Err(corrupt(format!("bad magic in '{header}'")));
    }
    let version: u32 = fields
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(format!("bad version field in '{header}'")))?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        }
        .into());
    }
    let len: usize = fields
        .next()
        .and_then(|v| v.parse().ok())
        .filter(|_| fields.next().is_none())
        .ok_or_else(|| corrupt(format!("bad manifest length in '{header}'")))?;
    let start = nl + 1;
    let manifest_bytes = bytes
        .get(start..start + len)
        .ok_or_else(|| corrupt("file ends inside the manifest"))?;
    let manifest: Manifest = serde_json::from_slice(manifest_bytes).map_err(|e| corrupt(e.to_string()))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: manifest.version,
            expected: CHECKPOINT_VERSION,
        }
        .into());
    }
    let payload = &bytes[start + len..];
    let computed = hex::encode(Sha256::digest(payload));
    if computed != manifest.sha256 {
        return Err(CheckpointError::DigestMismatch {
            expected: manifest.sha256,
            computed,
        }
        .into());
    }
    let config = manifest.config;
    config.validate()?;
    let mut params = NetworkParams::<f32>::zeros(&config)?;
    let names: Vec<String> = param_tensors(&params).into_iter().map(|(n, _)| n).collect();
    let expected = names.len() * 3;
    if manifest.tensors.len() != expected {
        return Err(CheckpointError::Layout(format!(
            "{} tensors stored, configuration needs {expected}",
            manifest.tensors.len()
        ))
        .into());
    }
    let mut decoded = Vec::with_capacity(expected);
    let mut cursor = 0u64;
    for entry in &manifest.tensors {
        let shape = Shape::from(entry.shape);
        let nbytes = shape.len() as u64 * 4;
        if entry.offset != cursor || entry.offset + nbytes > payload.len() as u64 {
            return Err(CheckpointError::Layout(format!("tensor {} has bad offset", entry.name)).into());
        }
        let raw = &payload[entry.offset as usize..(entry.offset + nbytes) as usize];
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        decoded.push((entry.name.as_str(), Tensor::from_vec(shape, data)?));
        cursor += nbytes;
    }
    if cursor != payload.len() as u64 {
        return Err(CheckpointError::Layout("payload has trailing bytes".into()).into());
    }
    let mut it = decoded.into_iter();
    let mut take = |want: &str, like: Shape| -> Result<Tensor<f32>> {
        let (name, t) = it.next().expect("count checked above");
        if name != want || t.shape() != like {
            return Err(CheckpointError::Layout(format!(
                "expected {want} {like}, found {name} {}",
                t.shape()
            ))
            .into());
        }
        Ok(t)
    };
    let shapes: Vec<Shape> = param_tensors(&params).into_iter().map(|(_, t)| t.shape()).collect();
    for ((slot, name), &shape) in param_tensors_mut(&mut params).into_iter().zip(&names).zip(&shapes) {
        *slot = take(name, shape)?;
    }
    let mut moments = [Vec::new(), Vec::new()];
    for (prefix, out) in ["adam.m", "adam.v"].iter().zip(moments.iter_mut()) {
        for (name, &shape) in names.iter().zip(&shapes) {
            out.push(take(&format!("{prefix}.{name}"), shape)?);
        }
    }
    let [m, v] = moments;
    Ok(Checkpoint {
        config,
        seed: manifest.seed,
        epoch: manifest.epoch,
        params,
        optimizer: AdamState {
            hyper: manifest.optimizer.hyper,
            step: manifest.optimizer.step,
            m,
            v,
        },
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut cfg = NetworkConfig::uniform(2, 1, 4, 0.5, 2);
        cfg.fusion = true;
        let params = NetworkParams::init(&cfg, 9).unwrap();
        let mut ckpt = Checkpoint::new(cfg, 9, params, AdamHyper::default());
        ckpt.optimizer.m[0].data_mut()[0] = 0.25;
        ckpt.optimizer.step = 3;
        ckpt
    }

    #[test]
    fn round_trip_is_exact() {
        let ckpt = sample();
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn damage_is_reported() {
        let bytes = encode_checkpoint(&sample()).unwrap();
        let truncated = &bytes[..bytes.len() - 5];
        assert!(matches!(
            decode_checkpoint(truncated),
            Err(Error::Checkpoint(CheckpointError::DigestMismatch { .. }))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::Checkpoint(CheckpointError::CorruptHeader(_)))
        ));
        let text = String::from_utf8_lossy(&bytes[..20]).replace("v1", "v7");
        let mut other = text.into_bytes();
        other.extend_from_slice(&bytes[20..]);
        assert!(matches!(
            decode_checkpoint(&other),
            Err(Error::Checkpoint(CheckpointError::VersionMismatch { found: 7, .. }))
        ));
    }
}

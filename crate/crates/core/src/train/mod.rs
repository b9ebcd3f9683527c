//! Losses, Adam, the learning-rate schedule, the training loop, checkpoints and
//! inference.

mod adam;
mod checkpoint;
mod infer;
mod loss;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, param_tensors, param_tensors_mut, save_checkpoint,
    Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use infer::{degrade, evaluate_image, predict, super_resolve, super_resolve_rgb, ImageScore};
pub use loss::{l1_loss, loss_and_grads, multi_supervised_loss, multi_supervised_loss_on_tape, LossAndGrads};

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{NetworkConfig, NetworkParams};
use crate::data::{batch_tensors, ImagePlane, TrainPair};
use crate::error::{Error, Result};

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
pub const METRICS_LOG: &str = "metrics.jsonl";

/// Optimization schedule. Epochs are counted from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub initial_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub total_epochs: usize,
    /// 16 at desk scale; 32 for DIV2K-sized runs.
    pub batch_size: usize,
    /// Weight of the intermediate-output terms in the loss.
    pub beta: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            initial_lr: 1e-4,
            decay_every: 15,
            decay_factor: 0.1,
            total_epochs: 60,
            batch_size: 16,
            beta: 1.0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("schedule: {m}")));
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return bad("initial_lr must be positive");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay_factor must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        Ok(())
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = epoch.saturating_sub(1) / self.decay_every;
        self.initial_lr * self.decay_factor.powi(decays as i32)
    }
}

/// Training pairs plus full-size held-out images (unit-range luminance).
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub pairs: Vec<TrainPair>,
    pub val: Vec<ImagePlane>,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub seed: u64,
    /// Checkpoints and the metrics log go here when set.
    pub out_dir: Option<PathBuf>,
    /// Start from these parameters instead of a fresh initialization.
    pub init: Option<Checkpoint>,
    /// PSNR border shave for validation; defaults to the scale factor.
    pub shave: Option<usize>,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        TrainOptions {
            seed,
            out_dir: None,
            init: None,
            shave: None,
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: u64,
    pub train_loss: f64,
    pub val_psnr: Option<f64>,
    pub val_bicubic_psnr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    pub best: Option<Checkpoint>,
    pub log: Vec<EpochRecord>,
}

/// Mean PSNR of the network and of bicubic over a set of images.
pub fn validate(params: &NetworkParams<f32>, cfg: &NetworkConfig, images: &[ImagePlane], shave: usize) -> Result<(f64, f64)> {
    let mut net = 0.0;
    let mut bic = 0.0;
    for img in images {
        let s = evaluate_image(params, cfg, img, shave)?;
        net += s.psnr;
        bic += s.bicubic_psnr;
    }
    let n = images.len().max(1) as f64;
    Ok((net / n, bic / n))
}

fn append_record(path: &Path, record: &EpochRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Seeded-shuffle minibatch training with Adam and step decay.
///
/// Each epoch logs the mean training loss and, when validation images exist,
/// mean validation PSNR for the network and for bicubic. The best-validation
/// checkpoint is kept alongside the final one. A non-finite loss or gradient
/// stops the run with [`Error::Diverged`] carrying the last good state, which
/// is also written to the output directory.
pub fn train(
    cfg: &NetworkConfig,
    schedule: &TrainSchedule,
    data: &TrainData,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    schedule.validate()?;
    if data.pairs.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    if let Some(bad) = data.pairs.iter().find(|p| p.scale != cfg.scale || p.residual != cfg.residual_target) {
        return Err(Error::Config(format!(
            "training pair (scale {}, residual {}) does not match network (scale {}, residual {})",
            bad.scale, bad.residual, cfg.scale, cfg.residual_target
        )));
    }
    let shave = opts.shave.unwrap_or(cfg.scale);
    let hyper = AdamHyper {
        lr: schedule.initial_lr,
        ..AdamHyper::default()
    };
    let mut ckpt = match &opts.init {
        Some(c) => {
            c.params.check_layout(cfg)?;
            c.clone()
        }
        None => Checkpoint::new(cfg.clone(), opts.seed, NetworkParams::init(cfg, opts.seed)?, hyper),
    };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log = dir.join(METRICS_LOG);
        if log.exists() {
            std::fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..data.pairs.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let start_epoch = ckpt.epoch + 1;

    for epoch in start_epoch..start_epoch + schedule.total_epochs {
        let lr = schedule.lr_at_epoch(epoch);
        ckpt.optimizer.hyper.lr = lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut batches = 0u64;
        let last_good = ckpt.clone();
        for chunk in order.chunks(schedule.batch_size) {
            let pairs: Vec<&TrainPair> = chunk.iter().map(|&i| &data.pairs[i]).collect();
            let (x, t) = batch_tensors(&pairs)?;
            let step_result = loss_and_grads(&ckpt.params, cfg, &x, &t, schedule.beta).and_then(|lg| {
                if !lg.loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss {} at step {}", lg.loss, ckpt.optimizer.step + 1)));
                }
                let grads: Vec<_> = param_tensors(&lg.grads).into_iter().map(|(_, g)| g.clone()).collect();
                let grad_refs: Vec<_> = grads.iter().collect();
                let mut params = ckpt.params.clone();
                adam_step(&mut param_tensors_mut(&mut params), &grad_refs, &mut ckpt.optimizer)?;
                if params.kernels().iter().any(|k| !k.weight.is_finite() || !k.bias.is_finite()) {
                    return Err(Error::NonFinite("parameters after update".into()));
                }
                ckpt.params = params;
                Ok(lg.loss as f64)
            });
            match step_result {
                Ok(l) => {
                    loss_sum += l;
                    batches += 1;
                }
                Err(Error::NonFinite(_)) => {
                    let step = ckpt.optimizer.step + 1;
                    if let Some(dir) = &opts.out_dir {
                        save_checkpoint(&last_good, &dir.join(LAST_GOOD_CHECKPOINT))?;
                    }
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        last_good: Box::new(last_good),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        ckpt.epoch = epoch;
        let (val_psnr, val_bicubic_psnr) = if data.val.is_empty() {
            (None, None)
        } else {
            let (p, b) = validate(&ckpt.params, cfg, &data.val, shave)?;
            (Some(p), Some(b))
        };
        let record = EpochRecord {
            epoch,
            lr,
            steps: ckpt.optimizer.step,
            train_loss: loss_sum / batches.max(1) as f64,
            val_psnr,
            val_bicubic_psnr,
        };
        if let Some(dir) = &opts.out_dir {
            append_record(&dir.join(METRICS_LOG), &record)?;
        }
        if let Some(p) = val_psnr {
            if best.as_ref().is_none_or(|(b, _)| p > *b) {
                best = Some((p, ckpt.clone()));
                if let Some(dir) = &opts.out_dir {
                    save_checkpoint(&ckpt, &dir.join(BEST_CHECKPOINT))?;
                }
            }
        }
        log.push(record);
    }
    if let Some(dir) = &opts.out_dir {
        save_checkpoint(&ckpt, &dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        last: ckpt,
        best: best.map(|(_, c)| c),
        log,
    })
}

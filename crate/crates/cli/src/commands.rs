use std::path::{Path, PathBuf};

use lcsc::arch::{NetworkConfig, NetworkParams};
use lcsc::data::{
    augment_rotations, bicubic_resize_to, extract_patches, list_images, load_image, load_luminance, save_image,
    ColorSpace, Dataset, ImagePlane, Split,
};
use lcsc::metrics::{cost_report, psnr, ssim, SSIM_WINDOW};
use lcsc::train::{
    degrade, load_checkpoint, super_resolve, super_resolve_rgb, train as run_training, EpochRecord, TrainData,
    TrainOptions,
};
use lcsc::verify::{run_suite, Suite};
use serde_json::{json, Value};

use crate::config::{RunConfig, DATA_ROOT_ENV, EFFECTIVE_CONFIG};
use crate::{CliError, Reference};

/// JSON has no infinities; non-finite values become strings.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn opt_num(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

fn load_training_data(cfg: &RunConfig) -> Result<TrainData, CliError> {
    let root = cfg.data.resolved_root()?;
    let ds = Dataset::open(&root)?;
    let (patch, stride) = cfg.data.patch_and_stride(cfg.network.scale)?;
    let scale = cfg.network.scale;
    let mut pairs = Vec::new();
    for path in ds.split(Split::Train) {
        let img = load_luminance(path)?;
        for pair in extract_patches(&img, scale, patch, stride, cfg.network.residual_target)? {
            if cfg.data.no_rotations {
                pairs.push(pair);
            } else {
                pairs.extend(augment_rotations(&pair)?);
            }
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Runtime(format!("no training patches under {}", root.display())));
    }
    let val = ds.split(Split::Val).iter().map(|p| load_luminance(p)).collect::<Result<_, _>>()?;
    Ok(TrainData { pairs, val })
}

fn epoch_table(log: &[EpochRecord]) -> String {
    let mut out = format!(
        "{:>5}  {:>9}  {:>7}  {:>10}  {:>9}  {:>9}\n",
        "epoch", "lr", "steps", "loss", "psnr", "bicubic"
    );
    for r in log {
        out.push_str(&format!(
            "{:>5}  {:>9.2e}  {:>7}  {:>10.6}  {:>9}  {:>9}\n",
            r.epoch,
            r.lr,
            r.steps,
            r.train_loss,
            fmt_opt(r.val_psnr, 3),
            fmt_opt(r.val_bicubic_psnr, 3)
        ));
    }
    out
}

pub fn train(
    config: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<PathBuf>,
    json_out: bool,
) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config, overrides)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(o) = out {
        cfg.run.out = o;
    }
    let data = load_training_data(&cfg)?;
    let dir = &cfg.run.out;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let effective = dir.join(EFFECTIVE_CONFIG);
    std::fs::write(&effective, cfg.to_toml())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", effective.display())))?;
    eprintln!(
        "training on {} patches, {} held-out images; output in {}",
        data.pairs.len(),
        data.val.len(),
        dir.display()
    );
    let mut opts = TrainOptions::new(cfg.run.seed);
    opts.out_dir = Some(dir.clone());
    let outcome = run_training(&cfg.network, &cfg.schedule, &data, &opts)?;
    if json_out {
        for r in &outcome.log {
            println!("{}", serde_json::to_string(r).expect("record serializes"));
        }
    } else {
        print!("{}", epoch_table(&outcome.log));
    }
    Ok(())
}

struct Row {
    name: String,
    psnr: f64,
    ssim: Option<f64>,
    bicubic_psnr: f64,
    bicubic_ssim: Option<f64>,
}

fn score(
    params: &NetworkParams<f32>,
    cfg: &NetworkConfig,
    img: &ImagePlane,
    against: Reference,
    shave: usize,
) -> Result<Row, CliError> {
    let (hr, lr) = degrade(img, cfg.scale)?;
    let sr = super_resolve(params, cfg, &lr)?;
    let bic = bicubic_resize_to(&lr, hr.height, hr.width)?.clamp_to_range();
    let reference = match against {
        Reference::Hr => &hr,
        Reference::Bicubic => &bic,
    };
    let (h, w) = (hr.height.saturating_sub(2 * shave), hr.width.saturating_sub(2 * shave));
    let ssim_of = |x: &ImagePlane| -> Result<Option<f64>, CliError> {
        if h < SSIM_WINDOW || w < SSIM_WINDOW {
            return Ok(None);
        }
        Ok(Some(ssim(&reference.crop(shave, shave, h, w)?, &x.crop(shave, shave, h, w)?)?))
    };
    Ok(Row {
        name: String::new(),
        psnr: psnr(reference, &sr, shave)?,
        ssim: ssim_of(&sr)?,
        bicubic_psnr: psnr(reference, &bic, shave)?,
        bicubic_ssim: ssim_of(&bic)?,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn mean_opt(rows: &[Row], f: impl Fn(&Row) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = rows.iter().map(f).collect();
    vals.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

pub fn eval(
    checkpoint: &Path,
    data: Option<PathBuf>,
    against: Reference,
    shave: Option<usize>,
    json_out: bool,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let cfg = &ckpt.config;
    let dir = match data {
        Some(d) => d,
        None => std::env::var_os(DATA_ROOT_ENV)
            .map(|r| PathBuf::from(r).join("val"))
            .ok_or_else(|| CliError::Config(format!("pass --data or set {DATA_ROOT_ENV}")))?,
    };
    let paths = list_images(&dir)?;
    if paths.is_empty() {
        return Err(CliError::Runtime(format!("no images in {}", dir.display())));
    }
    let shave = shave.unwrap_or(cfg.scale);
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for path in &paths {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match load_luminance(path).map_err(CliError::from).and_then(|img| score(&ckpt.params, cfg, &img, against, shave)) {
            Ok(row) => rows.push(Row { name, ..row }),
            Err(e) => {
                eprintln!("warning: skipping {name}: {e}");
                skipped += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("none of the {} images in {} could be scored", paths.len(), dir.display())));
    }
    let mean_row = Row {
        name: "mean".into(),
        psnr: mean(rows.iter().map(|r| r.psnr)),
        ssim: mean_opt(&rows, |r| r.ssim),
        bicubic_psnr: mean(rows.iter().map(|r| r.bicubic_psnr)),
        bicubic_ssim: mean_opt(&rows, |r| r.bicubic_ssim),
    };
    if json_out {
        let record = |r: &Row| {
            json!({
                "image": r.name,
                "psnr": num(r.psnr),
                "ssim": opt_num(r.ssim),
                "bicubic_psnr": num(r.bicubic_psnr),
                "bicubic_ssim": opt_num(r.bicubic_ssim),
            })
        };
        let report = json!({
            "checkpoint": checkpoint.display().to_string(),
            "reference": format!("{against:?}").to_lowercase(),
            "shave": shave,
            "images": rows.iter().map(record).collect::<Vec<_>>(),
            "mean": record(&mean_row),
            "skipped": skipped,
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let name_w = rows.iter().map(|r| r.name.len()).chain([5]).max().unwrap_or(5);
    println!("{:<name_w$}  {:>9}  {:>7}  {:>9}  {:>7}", "image", "psnr", "ssim", "bic_psnr", "bic_ssim");
    for r in rows.iter().chain([&mean_row]) {
        println!(
            "{:<name_w$}  {:>9.3}  {:>7}  {:>9.3}  {:>7}",
            r.name,
            r.psnr,
            fmt_opt(r.ssim, 4),
            r.bicubic_psnr,
            fmt_opt(r.bicubic_ssim, 4)
        );
    }
    println!("scored {} images, skipped {skipped}", rows.len());
    Ok(())
}

pub fn sr(checkpoint: &Path, input: &Path, out: &Path, scale: Option<usize>) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    if let Some(s) = scale.filter(|s| *s != ckpt.config.scale) {
        return Err(CliError::Config(format!("checkpoint upscales by {}, not {s}", ckpt.config.scale)));
    }
    let img = load_image(input)?;
    let hr = match img.space {
        ColorSpace::LuminanceY => super_resolve(&ckpt.params, &ckpt.config, &img)?,
        ColorSpace::Rgb => super_resolve_rgb(&ckpt.params, &ckpt.config, &img)?,
    };
    save_image(&hr, out)?;
    eprintln!("{}x{} -> {}x{}: {}", img.width, img.height, hr.width, hr.height, out.display());
    Ok(())
}

pub fn count(
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    overrides: &[String],
    hr: (usize, usize),
    with_bias: bool,
    json_out: bool,
) -> Result<(), CliError> {
    let network = match (config, checkpoint) {
        (Some(path), _) => RunConfig::load(path, overrides)?.network,
        (None, Some(path)) => load_checkpoint(path)?.config,
        (None, None) => return Err(CliError::Config("pass --config or --checkpoint".into())),
    };
    let report = cost_report(&network, hr, with_bias)?;
    if json_out {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

pub fn verify(name: &str, json_out: bool) -> Result<(), CliError> {
    let suites: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![name.parse()?]
    };
    let mut failed = Vec::new();
    let mut reports = Vec::new();
    for suite in suites {
        let report = run_suite(suite)?;
        if !json_out {
            for check in &report.checks {
                println!("{check}");
            }
            println!(
                "{} {suite} ({} checks, {:.2}s)",
                if report.passed() { "PASS" } else { "FAIL" },
                report.checks.len(),
                report.seconds
            );
        }
        if !report.passed() {
            failed.push(suite.name());
        }
        reports.push(report);
    }
    if json_out {
        let records: Vec<Value> = reports
            .iter()
            .flat_map(|r| &r.checks)
            .map(|c| {
                json!({
                    "suite": c.suite.name(),
                    "check": c.name,
                    "passed": c.passed,
                    "measured": num(c.measured),
                    "bound": num(c.bound),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&records).expect("records serialize"));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("suites {}", failed.join(", "))))
    }
}

use lcsc::arch::{network_forward, NetworkConfig, NetworkParams};
use lcsc::data::{bicubic_resize_to, normalize, synthetic_image, ImagePlane};
use lcsc::metrics::{cost_report, param_ratio_ld, psnr, ssim, DEFAULT_HR_SIZE};
use lcsc::tensor::{nearest_upsample, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn ratio_ld_curve(rho: f64, k: usize, max_units: usize) -> Result<Vec<f64>, String> {
    (1..=max_units).map(|l| param_ratio_ld(l, rho, k).map_err(|e| e.to_string())).collect()
}

pub fn cost_table(blocks: usize, units: usize, width: usize, rho: f64, scale: usize, fusion: bool) -> Result<String, String> {
    let mut cfg = NetworkConfig::uniform(blocks, units, width, rho, scale);
    cfg.enhanced = true;
    cfg.fusion = fusion;
    Ok(cost_report(&cfg, DEFAULT_HR_SIZE, true).map_err(|e| e.to_string())?.to_table())
}

fn gray_rgba(values: &[f32]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

pub struct FusionMaps {
    pub width: usize,
    pub height: usize,
    pub maps: Vec<Vec<u8>>,
    pub means: Vec<f64>,
    pub sum_error: f64,
}

pub fn fusion_maps(blocks: usize, gate_spread: f64, seed: u64, size: usize) -> Result<FusionMaps, String> {
    if !(2..=6).contains(&blocks) {
        return Err(format!("blocks must be between 2 and 6, got {blocks}"));
    }
    let mut cfg = NetworkConfig::uniform(blocks, 1, 8, 0.5, 2);
    cfg.fusion = true;
    let mut params = NetworkParams::<f32>::init(&cfg, seed).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = gate_spread.abs();
    for gate in params.fusion.iter_mut().filter(|_| spread > 0.0) {
        gate.weight = Tensor::random_uniform(gate.weight.shape(), -spread, spread, &mut rng);
    }
    let img = normalize(&synthetic_image(seed, size, size)).map_err(|e| e.to_string())?;
    let out = network_forward(&params, &cfg, &img.to_tensor()).map_err(|e| e.to_string())?;
    let trace = out.fusion.ok_or("network has no fusion trace")?;
    let shape = trace.weights[0].shape();
    let mut total = vec![0.0f64; trace.weights[0].len()];
    for w in &trace.weights {
        for (t, v) in total.iter_mut().zip(w.data()) {
            *t += *v as f64;
        }
    }
    Ok(FusionMaps {
        width: shape.width,
        height: shape.height,
        maps: trace.weights.iter().map(|w| gray_rgba(w.data())).collect(),
        means: trace
            .weights
            .iter()
            .map(|w| w.data().iter().map(|v| *v as f64).sum::<f64>() / w.len() as f64)
            .collect(),
        sum_error: total.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max),
    })
}

pub struct Comparison {
    pub width: usize,
    pub height: usize,
    pub original: Vec<u8>,
    pub nearest: Vec<u8>,
    pub bicubic: Vec<u8>,
    pub nearest_psnr: f64,
    pub nearest_ssim: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
}

pub fn upscale_comparison(seed: u64, size: usize, scale: usize) -> Result<Comparison, String> {
    if !(2..=4).contains(&scale) {
        return Err(format!("scale must be 2, 3 or 4, got {scale}"));
    }
    let side = size / scale * scale;
    if side < 16 {
        return Err(format!("image side {size} is too small"));
    }
    let err = |e: lcsc::Error| e.to_string();
    let hr = synthetic_image(seed, side, side);
    let lr = bicubic_resize_to(&hr, side / scale, side / scale).map_err(err)?.clamp_to_range();
    let near = nearest_upsample(&lr.to_tensor(), scale).map_err(err)?;
    let near = hr.with_data(near.into_vec(), hr.range);
    let bic = bicubic_resize_to(&lr, side, side).map_err(err)?.clamp_to_range();
    let score = |img: &ImagePlane| -> Result<(f64, f64), String> {
        Ok((psnr(&hr, img, scale).map_err(err)?, ssim(&hr, img).map_err(err)?))
    };
    let (nearest_psnr, nearest_ssim) = score(&near)?;
    let (bicubic_psnr, bicubic_ssim) = score(&bic)?;
    Ok(Comparison {
        width: side,
        height: side,
        original: gray_rgba(&hr.data),
        nearest: gray_rgba(&near.data),
        bicubic: gray_rgba(&bic.data),
        nearest_psnr,
        nearest_ssim,
        bicubic_psnr,
        bicubic_ssim,
    })
}

use crate::data::ImagePlane;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_pair(a: &ImagePlane, b: &ImagePlane, op: &'static str) -> Result<()> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// Mean squared error over the region left after removing `shave` pixels from
/// every border, across all channels.
pub fn mse(a: &ImagePlane, b: &ImagePlane, shave: usize) -> Result<f64> {
    check_pair(a, b, "psnr")?;
    if 2 * shave >= a.height || 2 * shave >= a.width {
        return Err(Error::arg(
            "psnr",
            format!("shave {shave} leaves nothing of a {}x{} image", a.height, a.width),
        ));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for c in 0..a.channels {
        for y in shave..a.height - shave {
            for x in shave..a.width - shave {
                let d = a.at(c, y, x) as f64 - b.at(c, y, x) as f64;
                sum += d * d;
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

/// `10·log10(1 / MSE)` for unit-range images; identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &ImagePlane, b: &ImagePlane, shave: usize) -> Result<f64> {
    let m = mse(a, b, shave)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable Gaussian filter over valid positions only.
fn filter_valid(src: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|t| g[t] * src[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|t| g[t] * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all valid 11×11 Gaussian windows
/// (σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1), averaged over channels.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    check_pair(a, b, "ssim")?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(Error::arg(
            "ssim",
            format!("{}x{} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window", a.height, a.width),
        ));
    }
    let g = gaussian_window();
    let (h, w) = (a.height, a.width);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for c in 0..a.channels {
        let pa: Vec<f64> = a.plane(c).iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.plane(c).iter().map(|&v| v as f64).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, h, w, &g);
        let mu_b = filter_valid(&pb, h, w, &g);
        let e_aa = filter_valid(&aa, h, w, &g);
        let e_bb = filter_valid(&bb, h, w, &g);
        let e_ab = filter_valid(&ab, h, w, &g);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            sum += num / den;
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / a.channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_sentinel_and_uniform_offset() {
        let a = ImagePlane::from_fn(8, 8, |y, x| (y + x) as f32 / 20.0);
        assert_eq!(psnr(&a, &a, 2).unwrap(), f64::INFINITY);
        let b = a.with_data(a.data.iter().map(|v| v + 0.1).collect(), a.range);
        assert!((psnr(&a, &b, 0).unwrap() - 20.0).abs() < 1e-4);
        assert!(psnr(&a, &b, 4).is_err());
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = crate::data::synthetic_image(3, 24, 24);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = a.with_data(a.data.iter().map(|v| 1.0 - v).collect(), a.range);
        assert!(ssim(&a, &inv).unwrap() < 1.0);
        assert!(ssim(&ImagePlane::from_fn(8, 8, |_, _| 0.0), &ImagePlane::from_fn(8, 8, |_, _| 0.0)).is_err());
    }
}

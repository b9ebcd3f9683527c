use lcsc::arch::{HeadKind, NetworkConfig, NetworkParams};
use lcsc::data::{synthetic_image, ImagePlane};
use lcsc::metrics::{
    cost_report, count_params, lcsc_unit_params, mult_adds, param_ratio_ld, param_ratio_lr, psnr, ssim,
};
use lcsc::train::param_tensors;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy(img: &ImagePlane, amp: f32, seed: u64) -> ImagePlane {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    img.with_data(
        img.data.iter().map(|v| (v + r.gen_range(-amp..amp)).clamp(0.0, 1.0)).collect(),
        img.range,
    )
}

fn psnr_oracle(a: &ImagePlane, b: &ImagePlane, shave: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0.0;
    for y in shave..a.height - shave {
        for x in shave..a.width - shave {
            let d = a.at(0, y, x) as f64 - b.at(0, y, x) as f64;
            sum += d * d;
            n += 1.0;
        }
    }
    10.0 * (1.0 / (sum / n)).log10()
}

/// Windowed statistics computed directly with a 2D Gaussian at every valid
/// window position.
fn ssim_oracle(a: &ImagePlane, b: &ImagePlane) -> f64 {
    let (win, sigma) = (11usize, 1.5f64);
    let mid = (win / 2) as f64;
    let mut w = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (dy, dx) = (i as f64 - mid, j as f64 - mid);
            w[i * win + j] = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0.0;
    for y in 0..=a.height - win {
        for x in 0..=a.width - win {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    ma += w[i * win + j] * a.at(0, y + i, x + j) as f64;
                    mb += w[i * win + j] * b.at(0, y + i, x + j) as f64;
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let da = a.at(0, y + i, x + j) as f64 - ma;
                    let db = b.at(0, y + i, x + j) as f64 - mb;
                    va += w[i * win + j] * da * da;
                    vb += w[i * win + j] * db * db;
                    cov += w[i * win + j] * da * db;
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    acc / count
}

#[test]
fn psnr_matches_scalar_formula() {
    let a = synthetic_image(1, 20, 24);
    let b = noisy(&a, 0.1, 2);
    for shave in [0, 2, 4] {
        let got = psnr(&a, &b, shave).unwrap();
        assert!((got - psnr_oracle(&a, &b, shave)).abs() < 1e-9);
        assert_eq!(got, psnr(&b, &a, shave).unwrap());
    }
    assert_eq!(psnr(&a, &a, 2).unwrap(), f64::INFINITY);
    let flat = ImagePlane::from_fn(10, 10, |_, _| 0.3);
    let shifted = ImagePlane::from_fn(10, 10, |_, _| 0.4);
    assert!((psnr(&flat, &shifted, 0).unwrap() - 20.0).abs() < 1e-4);
    assert!(psnr(&a, &ImagePlane::from_fn(20, 23, |_, _| 0.0), 0).is_err());
}

#[test]
fn ssim_matches_windowed_formula() {
    let a = synthetic_image(3, 16, 18);
    let b = noisy(&a, 0.2, 4);
    let got = ssim(&a, &b).unwrap();
    assert!((got - ssim_oracle(&a, &b)).abs() < 1e-9, "{got} vs {}", ssim_oracle(&a, &b));
    assert!((got - ssim(&b, &a).unwrap()).abs() < 1e-12);
    assert!(got < 1.0);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

fn toy(head: HeadKind, fusion: bool) -> NetworkConfig {
    let mut cfg = NetworkConfig::uniform(3, 2, 8, 0.25, 2);
    cfg.enhanced = true;
    cfg.head = head;
    cfg.fusion = fusion;
    cfg
}

#[test]
fn param_count_matches_stored_tensors() {
    for cfg in [toy(HeadKind::NearestStack, true), toy(HeadKind::SubPixel, false)] {
        let params = NetworkParams::<f32>::init(&cfg, 1).unwrap();
        let walked: usize = param_tensors(&params).iter().map(|(_, t)| t.len()).sum();
        let report = count_params(&cfg).unwrap();
        assert_eq!(report.params, walked as u64);
        assert_eq!(report.params, report.lines.iter().map(|l| l.params).sum::<u64>());
        assert_eq!(report.mult_adds, report.lines.iter().map(|l| l.mult_adds).sum::<u64>());
    }
}

#[test]
fn mult_adds_enumerate_layers() {
    let hr = (48, 30);
    for (head, scale) in [(HeadKind::NearestStack, 2), (HeadKind::NearestStack, 3), (HeadKind::SubPixel, 3)] {
        let mut cfg = toy(head, false);
        cfg.scale = scale;
        let params = NetworkParams::<f32>::init(&cfg, 1).unwrap();
        let hr_px = (hr.0 * hr.1) as u64;
        let lr_px = hr_px / (scale * scale) as u64;
        let expected: u64 = params
            .named_kernels()
            .iter()
            .map(|(name, k)| {
                let per_position = (k.weight.len() + k.bias.len()) as u64;
                let at_hr = name.starts_with("head") && head == HeadKind::NearestStack;
                per_position * if at_hr { hr_px } else { lr_px }
            })
            .sum();
        assert_eq!(mult_adds(&cfg, hr).unwrap(), expected);
        let no_bias = cost_report(&cfg, hr, false).unwrap();
        assert!(no_bias.mult_adds < expected);
    }
}

#[test]
fn unit_parameter_counts() {
    assert_eq!(lcsc_unit_params(64, 32, 3, false), 20_480);
    let cfg = NetworkConfig::uniform(1, 1, 64, 0.5, 2);
    let report = cost_report(&cfg, (64, 64), false).unwrap();
    let units = report.lines.iter().find(|l| l.label == "block1 units").unwrap();
    assert_eq!(units.params, 20_480);
}

#[test]
fn ratio_special_values() {
    assert_eq!(param_ratio_lr(1.0, 3), 1.0);
    assert!((param_ratio_lr(0.0, 3) - 1.0 / 9.0).abs() < 1e-15);
    for l in 1..50 {
        let r = param_ratio_ld(l, 0.5, 1).unwrap();
        assert!((r - 8.0 / (l as f64 + 3.0)).abs() < 1e-12);
    }
    assert!(param_ratio_ld(0, 0.5, 3).is_err());
    assert!(param_ratio_ld(4, 1.0, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psnr_is_symmetric(seed in any::<u64>(), amp in 0.01f32..0.5) {
        let a = synthetic_image(seed % 7, 12, 12);
        let b = noisy(&a, amp, seed);
        prop_assume!(a != b);
        prop_assert_eq!(psnr(&a, &b, 1).unwrap(), psnr(&b, &a, 1).unwrap());
        prop_assert!((psnr(&a, &b, 1).unwrap() - psnr_oracle(&a, &b, 1)).abs() < 1e-9);
    }

    #[test]
    fn ld_ratio_decreases_with_depth(rho in 0.05f64..0.95, k in prop::sample::select(vec![1usize, 3, 5])) {
        let mut prev = f64::INFINITY;
        for l in 1..60 {
            let r = param_ratio_ld(l, rho, k).unwrap();
            prop_assert!(r < prev);
            prev = r;
        }
    }
}

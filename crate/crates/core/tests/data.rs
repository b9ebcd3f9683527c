use std::collections::HashSet;

use lcsc::data::{
    augment_rotations, batch_tensors, bicubic_resize, bicubic_resize_to, default_patch_size, denormalize,
    extract_patches, load_luminance, make_pair, normalize, patch_grid_len, save_image, synthetic_image, to_luminance,
    ColorSpace, Dataset, ImagePlane, Split, ValueRange,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_plane(h: usize, w: usize, seed: u64) -> ImagePlane {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w).map(|_| r.gen_range(0.0f32..1.0)).collect();
    ImagePlane::luminance(h, w, data).unwrap()
}

fn cubic(x: f64) -> f64 {
    let a = -0.5;
    let t = x.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Normalized tap weights along one axis, over a generous index range.
fn taps(in_len: usize, out_len: usize, x: usize) -> Vec<(usize, f64)> {
    let scale = out_len as f64 / in_len as f64;
    let s = scale.min(1.0);
    let u = (x as f64 + 0.5) / scale - 0.5;
    let raw: Vec<(usize, f64)> = (-20..in_len as isize + 20)
        .map(|j| (j.clamp(0, in_len as isize - 1) as usize, cubic(s * (u - j as f64))))
        .filter(|(_, w)| *w != 0.0)
        .collect();
    let total: f64 = raw.iter().map(|(_, w)| w).sum();
    raw.into_iter().map(|(j, w)| (j, w / total)).collect()
}

/// Full 2D kernel sum per output pixel.
fn resize_oracle(img: &ImagePlane, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for y in 0..oh {
        let ty = taps(img.height, oh, y);
        for x in 0..ow {
            let tx = taps(img.width, ow, x);
            let mut acc = 0.0;
            for &(sy, wy) in &ty {
                for &(sx, wx) in &tx {
                    acc += wy * wx * img.at(0, sy, sx) as f64;
                }
            }
            out.push(acc);
        }
    }
    out
}

fn assert_close(a: &[f32], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((*x as f64 - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

#[test]
fn luminance_matches_weighted_sum() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let (h, w) = (5, 6);
    let data: Vec<f32> = (0..3 * h * w).map(|_| r.gen_range(0.0..1.0)).collect();
    let rgb = ImagePlane::new(h, w, 3, ColorSpace::Rgb, ValueRange::Unit, data.clone()).unwrap();
    let y = to_luminance(&rgb).unwrap();
    assert_eq!((y.channels, y.height, y.width), (1, h, w));
    for i in 0..h * w {
        let expect = 0.299 * data[i] as f64 + 0.587 * data[h * w + i] as f64 + 0.114 * data[2 * h * w + i] as f64;
        assert!((y.data[i] as f64 - expect).abs() < 1e-6);
    }
    let white = ImagePlane::new(1, 1, 3, ColorSpace::Rgb, ValueRange::Unit, vec![1.0; 3]).unwrap();
    assert!((to_luminance(&white).unwrap().data[0] - 1.0).abs() < 1e-6);
    let green = ImagePlane::new(1, 1, 3, ColorSpace::Rgb, ValueRange::Unit, vec![0.0, 1.0, 0.0]).unwrap();
    assert!((to_luminance(&green).unwrap().data[0] - 0.587).abs() < 1e-7);
}

#[test]
fn bicubic_downsample_matches_kernel_sum() {
    let ramp = ImagePlane::from_fn(8, 8, |y, x| (y * 8 + x) as f32 / 63.0);
    let half = bicubic_resize(&ramp, 0.5).unwrap();
    assert_eq!((half.height, half.width), (4, 4));
    assert_close(&half.data, &resize_oracle(&ramp, 4, 4), 1e-6);

    let noise = random_plane(9, 12, 3);
    let small = bicubic_resize_to(&noise, 3, 4).unwrap();
    assert_close(&small.data, &resize_oracle(&noise, 3, 4), 1e-6);
}

#[test]
fn bicubic_upsample_matches_kernel_sum() {
    let noise = random_plane(5, 4, 4);
    for (oh, ow) in [(10, 8), (15, 12), (20, 16)] {
        let up = bicubic_resize_to(&noise, oh, ow).unwrap();
        assert_close(&up.data, &resize_oracle(&noise, oh, ow), 1e-6);
    }
}

#[test]
fn bicubic_reproduces_linear_ramps_away_from_edges() {
    let ramp = ImagePlane::from_fn(6, 10, |_, x| x as f32 * 0.05);
    let up = bicubic_resize_to(&ramp, 12, 20).unwrap();
    for y in 0..12 {
        for x in 4..16 {
            let u = (x as f64 + 0.5) / 2.0 - 0.5;
            assert!((up.at(0, y, x) as f64 - 0.05 * u).abs() < 1e-6);
        }
    }
}

#[test]
fn bicubic_identity_and_rejections() {
    let img = random_plane(7, 5, 5);
    let same = bicubic_resize(&img, 1.0).unwrap();
    assert_close(&same.data, &img.data.iter().map(|v| *v as f64).collect::<Vec<_>>(), 1e-6);
    assert!(bicubic_resize(&img, 0.0).is_err());
    assert!(bicubic_resize(&img, f64::NAN).is_err());
    assert!(bicubic_resize_to(&img, 0, 3).is_err());
}

#[test]
fn default_patch_sizes() {
    assert_eq!(default_patch_size(2), Some((18, 36)));
    assert_eq!(default_patch_size(3), Some((12, 36)));
    assert_eq!(default_patch_size(4), Some((21, 84)));
    assert_eq!(default_patch_size(5), None);
}

#[test]
fn exact_fit_gives_one_patch() {
    let img = synthetic_image(1, 36, 36);
    let pairs = extract_patches(&img, 2, 18, 9, true).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!((pairs[0].lr_patch.height, pairs[0].target.height), (18, 36));
    assert!(extract_patches(&synthetic_image(1, 35, 40), 2, 18, 9, true).is_err());
}

#[test]
fn non_overlapping_patches_tile_the_region_once() {
    let img = random_plane(24, 30, 9);
    let (scale, lr) = (3, 3);
    let pairs = extract_patches(&img, scale, lr, lr, false).unwrap();
    let hr = lr * scale;
    let (rows, cols) = (24 / hr, 30 / hr);
    assert_eq!(pairs.len(), rows * cols);
    let mut seen = vec![0u32; 24 * 30];
    for (k, p) in pairs.iter().enumerate() {
        let (top, left) = ((k / cols) * hr, (k % cols) * hr);
        for y in 0..hr {
            for x in 0..hr {
                seen[(top + y) * 30 + left + x] += 1;
                let expect = 2.0 * img.at(0, top + y, left + x) - 1.0;
                assert!((p.target.at(0, y, x) - expect).abs() < 1e-6);
            }
        }
    }
    for y in 0..rows * hr {
        for x in 0..cols * hr {
            assert_eq!(seen[y * 30 + x], 1);
        }
    }
}

#[test]
fn residual_target_restores_hr() {
    let hr = synthetic_image(4, 24, 24);
    let pair = make_pair(&hr, 3, true).unwrap();
    assert_eq!(pair.target.range, ValueRange::Residual);
    let up = bicubic_resize_to(&pair.lr_patch, 24, 24).unwrap();
    let restored = up.add_residual(&pair.target).unwrap();
    for (r, h) in restored.data.iter().zip(&hr.data) {
        assert!((r - (2.0 * h - 1.0)).abs() < 1e-5);
    }
    // the LR patch is the clamped, normalized downsample
    let lr = bicubic_resize_to(&hr, 8, 8).unwrap();
    for (a, b) in pair.lr_patch.data.iter().zip(&lr.data) {
        assert!((a - (2.0 * b.clamp(0.0, 1.0) - 1.0)).abs() < 1e-6);
    }
}

fn rotate_oracle(img: &ImagePlane) -> ImagePlane {
    let n = img.height;
    ImagePlane {
        data: (0..n * n).map(|i| img.at(0, n - 1 - i % n, i / n)).collect(),
        ..img.clone()
    }
}

fn sorted(v: &[f32]) -> Vec<u32> {
    let mut bits: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
    bits.sort_unstable();
    bits
}

#[test]
fn rotations_are_clockwise_quarter_turns() {
    let pair = make_pair(&synthetic_image(5, 12, 12), 2, true).unwrap();
    let rots = augment_rotations(&pair).unwrap();
    assert_eq!(rots[0], pair);
    for k in 1..4 {
        assert_eq!(rots[k].lr_patch, rotate_oracle(&rots[k - 1].lr_patch));
        assert_eq!(rots[k].target, rotate_oracle(&rots[k - 1].target));
        assert_eq!(sorted(&rots[k].target.data), sorted(&pair.target.data));
    }
    // the top-left pixel ends up top-right after one clockwise turn
    let n = pair.lr_patch.height;
    assert_eq!(rots[1].lr_patch.at(0, 0, n - 1), pair.lr_patch.at(0, 0, 0));
    assert_eq!(rotate_oracle(&rots[3].target), pair.target);
}

#[test]
fn normalize_is_affine() {
    let img = random_plane(4, 4, 11);
    let n = normalize(&img).unwrap();
    assert_eq!(n.range, ValueRange::Signed);
    for (a, b) in img.data.iter().zip(&n.data) {
        assert!((b - (2.0 * a - 1.0)).abs() < 1e-7);
    }
    let half = ImagePlane::from_fn(1, 1, |_, _| 0.5);
    assert_eq!(normalize(&half).unwrap().data[0], 0.0);
    let back = denormalize(&n).unwrap();
    for (a, b) in img.data.iter().zip(&back.data) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(normalize(&n).is_err());
    assert!(normalize(&ImagePlane::from_fn(1, 1, |_, _| 1.5)).is_err());
}

#[test]
fn batches_stack_pairs() {
    let pairs = extract_patches(&synthetic_image(2, 24, 24), 2, 6, 6, true).unwrap();
    let refs: Vec<_> = pairs.iter().collect();
    let (lr, target) = batch_tensors(&refs).unwrap();
    assert_eq!(lr.shape().dims(), [4, 1, 6, 6]);
    assert_eq!(target.shape().dims(), [4, 1, 12, 12]);
    assert_eq!(lr.batch_item(3).into_vec(), pairs[3].lr_patch.data);
}

#[test]
fn dataset_tree_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("train")).unwrap();
    std::fs::create_dir_all(root.join("val")).unwrap();
    let img = synthetic_image(3, 8, 8);
    for name in ["b.png", "a.png"] {
        save_image(&img, &root.join("train").join(name)).unwrap();
    }
    save_image(&img, &root.join("val/c.bmp")).unwrap();
    std::fs::write(root.join("train/notes.txt"), "x").unwrap();

    let ds = Dataset::open(root).unwrap();
    let names: Vec<_> = ds.split(Split::Train).iter().map(|p| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(names, ["a.png", "b.png"]);
    assert_eq!(ds.split(Split::Val).len(), 1);

    let loaded = load_luminance(&ds.train[0]).unwrap();
    for (a, b) in loaded.data.iter().zip(&img.data) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
    }

    std::fs::write(root.join("list.txt"), "# set\ntrain train/a.png\nval val/c.bmp\n").unwrap();
    let from_manifest = Dataset::open(&root.join("list.txt")).unwrap();
    assert_eq!(from_manifest.train, vec![root.join("train/a.png")]);
    assert_eq!(from_manifest.val, vec![root.join("val/c.bmp")]);

    assert!(Dataset::parse_manifest("test x.png\n", root).is_err());
    assert!(Dataset::parse_manifest("train\n", root).is_err());
    assert!(Dataset::open(&root.join("missing")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn patch_count_follows_grid(h in 8..40usize, w in 8..40usize, scale in 2..4usize, lr in 2..4usize, stride in 1..4usize) {
        let img = ImagePlane::from_fn(h, w, |y, x| ((y * 31 + x * 17) % 97) as f32 / 96.0);
        let hr = lr * scale;
        let expected = |len: usize| if len < hr { 0 } else { (len - hr) / (stride * scale) + 1 };
        prop_assert_eq!(patch_grid_len(h, scale, lr, stride), expected(h));
        match extract_patches(&img, scale, lr, stride, true) {
            Ok(pairs) => prop_assert_eq!(pairs.len(), expected(h) * expected(w)),
            Err(_) => prop_assert!(h < hr || w < hr),
        }
    }

    #[test]
    fn constant_images_stay_constant(v in 0.0f32..1.0, h in 2..9usize, w in 2..9usize, oh in 1..20usize, ow in 1..20usize) {
        let img = ImagePlane::from_fn(h, w, |_, _| v);
        let out = bicubic_resize_to(&img, oh, ow).unwrap();
        prop_assert!(out.data.iter().all(|x| (x - v).abs() < 1e-5));
    }

    #[test]
    fn rotations_preserve_values(seed in any::<u64>()) {
        let pair = make_pair(&random_plane(8, 8, seed), 2, false).unwrap();
        let rots = augment_rotations(&pair).unwrap();
        let base: HashSet<u32> = pair.target.data.iter().map(|v| v.to_bits()).collect();
        for r in &rots {
            prop_assert_eq!(sorted(&r.target.data), sorted(&pair.target.data));
            prop_assert!(r.target.data.iter().all(|v| base.contains(&v.to_bits())));
        }
    }
}

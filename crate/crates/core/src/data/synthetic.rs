use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ImagePlane;

enum Shape {
    Disk { cy: f64, cx: f64, r: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Stripes { angle: f64, period: f64, phase: f64, y0: f64, x0: f64, size: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disk { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { y0, x0, y1, x1 } => (y0..y1).contains(&y) && (x0..x1).contains(&x),
            Shape::Stripes {
                angle,
                period,
                phase,
                y0,
                x0,
                size,
            } => {
                let inside = (y0..y0 + size).contains(&y) && (x0..x0 + size).contains(&x);
                let t = (x * angle.cos() + y * angle.sin()) / period + phase;
                inside && t.rem_euclid(1.0) < 0.5
            }
        }
    }
}

/// Deterministic luminance test image: a smooth gradient overlaid with
/// hard-edged disks, rectangles and striped patches, box-filtered over a 4×4
/// subpixel grid. Values stay inside `[0.05, 0.95]`.
pub fn synthetic_image(seed: u64, height: usize, width: usize) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);
    let base = rng.gen_range(0.25..0.75);
    let gy = rng.gen_range(-0.2..0.2) / h.max(1.0);
    let gx = rng.gen_range(-0.2..0.2) / w.max(1.0);
    let count = 6 + (height * width) / 400;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let shape = match rng.gen_range(0..3) {
            0 => Shape::Disk {
                cy: rng.gen_range(0.0..h),
                cx: rng.gen_range(0.0..w),
                r: rng.gen_range(2.0..(h.min(w) / 4.0).max(3.0)),
            },
            1 => {
                let (y0, x0) = (rng.gen_range(0.0..h), rng.gen_range(0.0..w));
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + rng.gen_range(3.0..(h / 3.0).max(4.0)),
                    x1: x0 + rng.gen_range(3.0..(w / 3.0).max(4.0)),
                }
            }
            _ => Shape::Stripes {
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                period: rng.gen_range(3.0..9.0),
                phase: rng.gen_range(0.0..1.0),
                y0: rng.gen_range(0.0..h),
                x0: rng.gen_range(0.0..w),
                size: rng.gen_range(6.0..(h.min(w) / 2.0).max(7.0)),
            },
        };
        let level = rng.gen_range(0.05..0.95);
        shapes.push((shape, level));
    }
    const SUB: usize = 4;
    ImagePlane::from_fn(height, width, |y, x| {
        let mut acc = 0.0;
        for sy in 0..SUB {
            for sx in 0..SUB {
                let py = y as f64 + (sy as f64 + 0.5) / SUB as f64;
                let px = x as f64 + (sx as f64 + 0.5) / SUB as f64;
                let mut v = base + gy * py + gx * px;
                for (shape, level) in &shapes {
                    if shape.contains(py, px) {
                        v = *level;
                    }
                }
                acc += v;
            }
        }
        (acc / (SUB * SUB) as f64).clamp(0.05, 0.95) as f32
    })
}

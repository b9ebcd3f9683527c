use super::ImagePlane;
use crate::error::{Error, Result};

pub const BICUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = −0.5`.
pub fn keys_cubic(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and normalized weights for each output index along one axis.
struct AxisWeights {
    taps: usize,
    index: Vec<usize>,
    weight: Vec<f64>,
}

fn axis_weights(in_len: usize, out_len: usize) -> AxisWeights {
    let scale = out_len as f64 / in_len as f64;
    // widen the kernel when shrinking so it low-passes at the output rate
    let stretch = scale.min(1.0);
    let half_width = 2.0 / stretch;
    let taps = (2.0 * half_width).ceil() as usize + 2;
    let mut index = Vec::with_capacity(out_len * taps);
    let mut weight = Vec::with_capacity(out_len * taps);
    for x in 0..out_len {
        let u = (x as f64 + 0.5) / scale - 0.5;
        let left = (u - half_width).floor() as isize;
        let start = weight.len();
        for t in 0..taps {
            let j = left + t as isize;
            weight.push(stretch * keys_cubic(stretch * (u - j as f64)));
            index.push(j.clamp(0, in_len as isize - 1) as usize);
        }
        let sum: f64 = weight[start..].iter().sum();
        for w in &mut weight[start..] {
            *w /= sum;
        }
    }
    AxisWeights { taps, index, weight }
}

/// Resize to an explicit output size, separably, columns first.
pub fn bicubic_resize_to(img: &ImagePlane, out_h: usize, out_w: usize) -> Result<ImagePlane> {
    if out_h == 0 || out_w == 0 || img.height == 0 || img.width == 0 {
        return Err(Error::arg(
            "bicubic_resize",
            format!("cannot resize {}x{} to {out_h}x{out_w}", img.height, img.width),
        ));
    }
    let (h, w) = (img.height, img.width);
    let cols = axis_weights(w, out_w);
    let rows = axis_weights(h, out_h);
    let mut data = Vec::with_capacity(img.channels * out_h * out_w);
    let mut tmp = vec![0.0f64; h * out_w];
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..out_w {
                let k = x * cols.taps;
                tmp[y * out_w + x] = (0..cols.taps)
                    .map(|t| cols.weight[k + t] * row[cols.index[k + t]] as f64)
                    .sum();
            }
        }
        for y in 0..out_h {
            let k = y * rows.taps;
            for x in 0..out_w {
                let v: f64 = (0..rows.taps)
                    .map(|t| rows.weight[k + t] * tmp[rows.index[k + t] * out_w + x])
                    .sum();
                data.push(v as f32);
            }
        }
    }
    Ok(ImagePlane {
        height: out_h,
        width: out_w,
        data,
        ..img.clone()
    })
}

/// Resize by a positive factor; output sides are rounded to the nearest integer.
pub fn bicubic_resize(img: &ImagePlane, scale: f64) -> Result<ImagePlane> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::arg("bicubic_resize", format!("scale {scale} must be positive")));
    }
    let out_h = (img.height as f64 * scale).round() as usize;
    let out_w = (img.width as f64 * scale).round() as usize;
    bicubic_resize_to(img, out_h, out_w)
}

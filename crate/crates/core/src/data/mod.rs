//! Training-pair manufacture: luminance conversion, bicubic resampling, patch
//! extraction, rotation augmentation and value normalization, plus image and
//! dataset I/O.

mod bicubic;
mod io;
mod synthetic;

pub use bicubic::{bicubic_resize, bicubic_resize_to, keys_cubic, BICUBIC_A};
pub use io::{list_images, load_image, load_luminance, save_image, Dataset, Split};
pub use synthetic::synthetic_image;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    LuminanceY,
}

/// Value domain of an [`ImagePlane`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueRange {
    /// `[0, 1]`, as decoded.
    Unit,
    /// `[−1, 1]`, network input domain.
    Signed,
    /// Differences of signed planes, `[−2, 2]`.
    Residual,
}

impl ValueRange {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            ValueRange::Unit => (0.0, 1.0),
            ValueRange::Signed => (-1.0, 1.0),
            ValueRange::Residual => (-2.0, 2.0),
        }
    }
}

/// A planar image: channel-major, then rows, then columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub space: ColorSpace,
    pub range: ValueRange,
    pub data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        space: ColorSpace,
        range: ValueRange,
        data: Vec<f32>,
    ) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::arg(
                "image_plane",
                format!("{} values for {channels}x{height}x{width}", data.len()),
            ));
        }
        let expected = match space {
            ColorSpace::Rgb => 3,
            ColorSpace::LuminanceY => 1,
        };
        if channels != expected {
            return Err(Error::arg("image_plane", format!("{space:?} needs {expected} channels, got {channels}")));
        }
        Ok(ImagePlane {
            height,
            width,
            channels,
            space,
            range,
            data,
        })
    }

    /// Single-channel luminance plane in the unit range.
    pub fn luminance(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, 1, ColorSpace::LuminanceY, ValueRange::Unit, data)
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        ImagePlane {
            height,
            width,
            channels: 1,
            space: ColorSpace::LuminanceY,
            range: ValueRange::Unit,
            data,
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn with_data(&self, data: Vec<f32>, range: ValueRange) -> Self {
        ImagePlane {
            data,
            range,
            ..self.clone()
        }
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::arg(
                "crop",
                format!(
                    "{height}x{width} at ({top}, {left}) exceeds {}x{}",
                    self.height, self.width
                ),
            ));
        }
        let mut data = Vec::with_capacity(self.channels * height * width);
        for c in 0..self.channels {
            for y in top..top + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + width]);
            }
        }
        Ok(ImagePlane {
            height,
            width,
            data,
            ..self.clone()
        })
    }

    /// Elementwise `self − other`, tagged as a residual.
    pub fn residual(&self, other: &ImagePlane) -> Result<Self> {
        self.check_same_dims(other, "residual")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(self.with_data(data, ValueRange::Residual))
    }

    /// Elementwise `self + residual`, keeping `self`'s range tag.
    pub fn add_residual(&self, residual: &ImagePlane) -> Result<Self> {
        self.check_same_dims(residual, "add_residual")?;
        let data = self.data.iter().zip(&residual.data).map(|(a, b)| a + b).collect();
        Ok(self.with_data(data, self.range))
    }

    pub fn clamp_to_range(&self) -> Self {
        let (lo, hi) = self.range.bounds();
        self.with_data(self.data.iter().map(|v| v.clamp(lo, hi)).collect(), self.range)
    }

    pub(crate) fn check_same_dims(&self, other: &ImagePlane, op: &'static str) -> Result<()> {
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(Error::shape(op, self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        Shape::new(1, self.channels, self.height, self.width)
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(self.shape(), self.data.clone()).expect("plane length matches its shape")
    }

    /// Batch item `b` of a tensor as a plane.
    pub fn from_tensor(t: &Tensor<f32>, b: usize, space: ColorSpace, range: ValueRange) -> Result<Self> {
        if b >= t.shape().batch {
            return Err(Error::arg("from_tensor", format!("batch item {b} of {}", t.shape())));
        }
        let item = t.batch_item(b);
        let s = item.shape();
        Self::new(s.height, s.width, s.channels, space, range, item.into_vec())
    }
}

/// BT.601 full-range luma.
pub fn to_luminance(rgb: &ImagePlane) -> Result<ImagePlane> {
    if rgb.channels != 3 || rgb.space != ColorSpace::Rgb {
        return Err(Error::arg(
            "to_luminance",
            format!("expected 3-channel RGB, got {} channels", rgb.channels),
        ));
    }
    let (r, g, b) = (rgb.plane(0), rgb.plane(1), rgb.plane(2));
    let data = (0..r.len())
        .map(|i| (0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64) as f32)
        .collect();
    ImagePlane::new(rgb.height, rgb.width, 1, ColorSpace::LuminanceY, rgb.range, data)
}

/// BT.601 full-range chroma `(Cb, Cr)` centred on zero.
pub fn chroma(rgb: &ImagePlane) -> Result<(ImagePlane, ImagePlane)> {
    let y = to_luminance(rgb)?;
    let (b, r) = (rgb.plane(2), rgb.plane(0));
    let cb = y.data.iter().zip(b).map(|(&y, &b)| (b - y) / 1.772).collect();
    let cr = y.data.iter().zip(r).map(|(&y, &r)| (r - y) / 1.402).collect();
    Ok((y.with_data(cb, ValueRange::Signed), y.with_data(cr, ValueRange::Signed)))
}

/// Inverse of [`chroma`] given the luma plane.
pub fn from_ycbcr(y: &ImagePlane, cb: &ImagePlane, cr: &ImagePlane) -> Result<ImagePlane> {
    y.check_same_dims(cb, "from_ycbcr")?;
    y.check_same_dims(cr, "from_ycbcr")?;
    let n = y.data.len();
    let mut data = vec![0.0f32; 3 * n];
    for i in 0..n {
        let (l, b, r) = (y.data[i], cb.data[i], cr.data[i]);
        let red = l + 1.402 * r;
        let blue = l + 1.772 * b;
        let green = (l - 0.299 * red - 0.114 * blue) / 0.587;
        data[i] = red.clamp(0.0, 1.0);
        data[n + i] = green.clamp(0.0, 1.0);
        data[2 * n + i] = blue.clamp(0.0, 1.0);
    }
    ImagePlane::new(y.height, y.width, 3, ColorSpace::Rgb, ValueRange::Unit, data)
}

const RANGE_SLACK: f32 = 1e-6;

/// `x ↦ 2x − 1`.
pub fn normalize(img: &ImagePlane) -> Result<ImagePlane> {
    if img.range != ValueRange::Unit {
        return Err(Error::arg("normalize", format!("input is tagged {:?}, not unit range", img.range)));
    }
    if let Some(bad) = img.data.iter().find(|v| !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(*v)) {
        return Err(Error::arg("normalize", format!("value {bad} outside [0, 1]")));
    }
    Ok(img.with_data(img.data.iter().map(|v| 2.0 * v - 1.0).collect(), ValueRange::Signed))
}

/// `x ↦ (x + 1) / 2`.
pub fn denormalize(img: &ImagePlane) -> Result<ImagePlane> {
    if img.range != ValueRange::Signed {
        return Err(Error::arg("denormalize", format!("input is tagged {:?}, not signed range", img.range)));
    }
    Ok(img.with_data(img.data.iter().map(|v| (v + 1.0) * 0.5).collect(), ValueRange::Unit))
}

/// Default LR/HR patch edge lengths per scale.
pub fn default_patch_size(scale: usize) -> Option<(usize, usize)> {
    match scale {
        2 => Some((18, 36)),
        3 => Some((12, 36)),
        4 => Some((21, 84)),
        _ => None,
    }
}

/// One training example in the signed domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub lr_patch: ImagePlane,
    /// `HR − bicubic(LR)` when `residual`, otherwise the HR patch.
    pub target: ImagePlane,
    pub scale: usize,
    pub residual: bool,
}

/// Number of patches [`extract_patches`] produces along an axis of length `len`.
pub fn patch_grid_len(len: usize, scale: usize, lr_size: usize, stride: usize) -> usize {
    let hr = lr_size * scale;
    if len < hr {
        0
    } else {
        (len - hr) / (stride * scale) + 1
    }
}

/// Cut an aligned grid of HR patches (`lr_size·scale` square, step
/// `stride·scale`) in row-major order; each LR patch is the bicubic
/// downsampling of its HR patch.
pub fn extract_patches(
    hr: &ImagePlane,
    scale: usize,
    lr_size: usize,
    stride: usize,
    residual: bool,
) -> Result<Vec<TrainPair>> {
    if scale == 0 || lr_size == 0 || stride == 0 {
        return Err(Error::arg("extract_patches", "scale, patch size and stride must be positive"));
    }
    if hr.channels != 1 || hr.range != ValueRange::Unit {
        return Err(Error::arg("extract_patches", "expects a unit-range luminance plane"));
    }
    let hr_size = lr_size * scale;
    if hr.height < hr_size || hr.width < hr_size {
        return Err(Error::Dataset(format!(
            "image {}x{} is smaller than one {hr_size}x{hr_size} patch",
            hr.height, hr.width
        )));
    }
    let rows = patch_grid_len(hr.height, scale, lr_size, stride);
    let cols = patch_grid_len(hr.width, scale, lr_size, stride);
    let mut pairs = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let patch = hr.crop(r * stride * scale, c * stride * scale, hr_size, hr_size)?;
            pairs.push(make_pair(&patch, scale, residual)?);
        }
    }
    Ok(pairs)
}

/// Build a pair from an HR crop whose sides are multiples of `scale`.
pub fn make_pair(hr_patch: &ImagePlane, scale: usize, residual: bool) -> Result<TrainPair> {
    let lr = bicubic_resize_to(hr_patch, hr_patch.height / scale, hr_patch.width / scale)?;
    let lr = normalize(&lr.clamp_to_range())?;
    let hr_n = normalize(hr_patch)?;
    let target = if residual {
        hr_n.residual(&bicubic_resize_to(&lr, hr_patch.height, hr_patch.width)?)?
    } else {
        hr_n
    };
    Ok(TrainPair {
        lr_patch: lr,
        target,
        scale,
        residual,
    })
}

fn rotate90(img: &ImagePlane) -> Result<ImagePlane> {
    if img.height != img.width {
        return Err(Error::arg("augment_rotations", format!("patch {}x{} is not square", img.height, img.width)));
    }
    let n = img.height;
    let mut data = Vec::with_capacity(img.data.len());
    for c in 0..img.channels {
        for y in 0..n {
            for x in 0..n {
                data.push(img.at(c, n - 1 - x, y));
            }
        }
    }
    Ok(img.with_data(data, img.range))
}

/// The pair and its 90°, 180° and 270° clockwise rotations.
pub fn augment_rotations(pair: &TrainPair) -> Result<[TrainPair; 4]> {
    let mut out = vec![pair.clone()];
    for _ in 0..3 {
        let last = out.last().expect("starts non-empty");
        out.push(TrainPair {
            lr_patch: rotate90(&last.lr_patch)?,
            target: rotate90(&last.target)?,
            ..last.clone()
        });
    }
    Ok(out.try_into().expect("four rotations"))
}

/// Stack pairs into `(lr, target)` batch tensors.
pub fn batch_tensors(pairs: &[&TrainPair]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let lr: Vec<_> = pairs.iter().map(|p| p.lr_patch.to_tensor()).collect();
    let target: Vec<_> = pairs.iter().map(|p| p.target.to_tensor()).collect();
    Ok((Tensor::stack(&lr)?, Tensor::stack(&target)?))
}

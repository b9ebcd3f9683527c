use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, Luma, Rgb, RgbImage};

use super::{to_luminance, ColorSpace, ImagePlane, ValueRange};
use crate::error::{Error, Result};

const EXTENSIONS: &[&str] = &["png", "bmp", "jpg", "jpeg"];

/// Decode an 8-bit raster into a unit-range plane: grayscale stays one channel,
/// everything else becomes RGB.
pub fn load_image(path: &Path) -> Result<ImagePlane> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => {
            let data = g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
            ImagePlane::luminance(h, w, data)
        }
        other => {
            let rgb = other.to_rgb8();
            let mut data = vec![0.0f32; 3 * h * w];
            for (i, p) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * h * w + i] = p[c] as f32 / 255.0;
                }
            }
            ImagePlane::new(h, w, 3, ColorSpace::Rgb, ValueRange::Unit, data)
        }
    }
}

/// [`load_image`] reduced to luminance.
pub fn load_luminance(path: &Path) -> Result<ImagePlane> {
    let img = load_image(path)?;
    match img.space {
        ColorSpace::Rgb => to_luminance(&img),
        ColorSpace::LuminanceY => Ok(img),
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a unit-range plane as 8-bit grayscale or RGB; the format follows the
/// file extension.
pub fn save_image(img: &ImagePlane, path: &Path) -> Result<()> {
    if img.range != ValueRange::Unit {
        return Err(Error::arg("save_image", format!("plane is tagged {:?}, not unit range", img.range)));
    }
    let (w, h) = (img.width as u32, img.height as u32);
    let result = match img.space {
        ColorSpace::LuminanceY => {
            GrayImage::from_fn(w, h, |x, y| Luma([quantize(img.at(0, y as usize, x as usize))])).save(path)
        }
        ColorSpace::Rgb => RgbImage::from_fn(w, h, |x, y| {
            let (y, x) = (y as usize, x as usize);
            Rgb([quantize(img.at(0, y, x)), quantize(img.at(1, y, x)), quantize(img.at(2, y, x))])
        })
        .save(path),
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Image paths by split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<PathBuf>,
    pub val: Vec<PathBuf>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

impl Dataset {
    /// A root with `train/` and `val/` subdirectories, or a manifest file.
    pub fn open(root: &Path) -> Result<Self> {
        if root.is_file() {
            Self::from_manifest(root)
        } else {
            Self::from_tree(root)
        }
    }

    pub fn from_tree(root: &Path) -> Result<Self> {
        let train = list_images(&root.join("train"))?;
        let val_dir = root.join("val");
        let val = if val_dir.is_dir() { list_images(&val_dir)? } else { Vec::new() };
        Ok(Dataset { train, val })
    }

    /// Manifest lines are `train <path>` or `val <path>`; blank lines and lines
    /// starting with `#` are ignored; relative paths resolve against the
    /// manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_manifest(&text, base)
    }

    pub fn parse_manifest(text: &str, base: &Path) -> Result<Self> {
        let mut ds = Dataset::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (split, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Dataset(format!("manifest line {}: expected '<split> <path>'", no + 1)))?;
            let file = base.join(rest.trim());
            match split {
                "train" => ds.train.push(file),
                "val" => ds.val.push(file),
                other => {
                    return Err(Error::Dataset(format!(
                        "manifest line {}: unknown split '{other}'",
                        no + 1
                    )))
                }
            }
        }
        Ok(ds)
    }

    pub fn split(&self, split: Split) -> &[PathBuf] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }
}

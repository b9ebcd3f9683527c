use serde::Serialize;

use crate::arch::{bind_constant, network_forward_on_tape, NetworkConfig, NetworkParams};
use crate::data::{
    bicubic_resize_to, chroma, denormalize, from_ycbcr, normalize, to_luminance, ColorSpace, ImagePlane, ValueRange,
};
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim, SSIM_WINDOW};
use crate::tensor::{Scalar, Tape, Tensor};

/// Final network output for a normalized input batch.
pub fn predict<T: Scalar>(params: &NetworkParams<T>, cfg: &NetworkConfig, input: &Tensor<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let net = bind_constant(&mut tape, params);
    let x = tape.constant(input.clone());
    let out = network_forward_on_tape(&mut tape, &net, cfg, x, false)?;
    Ok(tape.value(out.output).clone())
}

/// Upscale a unit-range luminance plane by the network's scale factor. In
/// residual mode the bicubic upscale is added back before leaving the signed
/// domain.
pub fn super_resolve(params: &NetworkParams<f32>, cfg: &NetworkConfig, lr: &ImagePlane) -> Result<ImagePlane> {
    if lr.channels != cfg.in_channels || lr.space != ColorSpace::LuminanceY {
        return Err(Error::arg("super_resolve", "expects a luminance plane"));
    }
    let lr_n = normalize(lr)?;
    let out = predict(params, cfg, &lr_n.to_tensor())?;
    let pred = ImagePlane::from_tensor(&out, 0, ColorSpace::LuminanceY, ValueRange::Signed)?;
    if !cfg.residual_target {
        return Ok(denormalize(&pred.clamp_to_range())?.clamp_to_range());
    }
    // a signed-domain residual is half as large in the unit domain
    let half = pred.with_data(pred.data.iter().map(|v| 0.5 * v).collect(), ValueRange::Residual);
    let bic = bicubic_resize_to(lr, lr.height * cfg.scale, lr.width * cfg.scale)?;
    Ok(bic.add_residual(&half)?.clamp_to_range())
}

/// Super-resolve the luma of an RGB image and upscale its chroma bicubically.
pub fn super_resolve_rgb(params: &NetworkParams<f32>, cfg: &NetworkConfig, rgb: &ImagePlane) -> Result<ImagePlane> {
    let y = to_luminance(rgb)?;
    let (cb, cr) = chroma(rgb)?;
    let y_hr = super_resolve(params, cfg, &y)?;
    let (h, w) = (y_hr.height, y_hr.width);
    from_ycbcr(&y_hr, &bicubic_resize_to(&cb, h, w)?, &bicubic_resize_to(&cr, h, w)?)
}

/// Crop so both sides are multiples of `scale`, then produce the bicubic
/// low-resolution input.
pub fn degrade(hr: &ImagePlane, scale: usize) -> Result<(ImagePlane, ImagePlane)> {
    let (h, w) = (hr.height / scale * scale, hr.width / scale * scale);
    if h == 0 || w == 0 {
        return Err(Error::Dataset(format!("{}x{} image is smaller than scale {scale}", hr.height, hr.width)));
    }
    let hr = hr.crop(0, 0, h, w)?;
    let lr = bicubic_resize_to(&hr, h / scale, w / scale)?.clamp_to_range();
    Ok((hr, lr))
}

/// PSNR/SSIM of the network and of plain bicubic upscaling against one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImageScore {
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: Option<f64>,
}

pub fn evaluate_image(
    params: &NetworkParams<f32>,
    cfg: &NetworkConfig,
    hr: &ImagePlane,
    shave: usize,
) -> Result<ImageScore> {
    let (hr, lr) = degrade(hr, cfg.scale)?;
    let sr = super_resolve(params, cfg, &lr)?;
    let bic = bicubic_resize_to(&lr, hr.height, hr.width)?.clamp_to_range();
    let ssim_of = |img: &ImagePlane| -> Result<Option<f64>> {
        let (h, w) = (hr.height.saturating_sub(2 * shave), hr.width.saturating_sub(2 * shave));
        if h < SSIM_WINDOW || w < SSIM_WINDOW {
            return Ok(None);
        }
        let crop = |p: &ImagePlane| p.crop(shave, shave, h, w);
        Ok(Some(ssim(&crop(&hr)?, &crop(img)?)?))
    };
    Ok(ImageScore {
        psnr: psnr(&hr, &sr, shave)?,
        ssim: ssim_of(&sr)?,
        bicubic_psnr: psnr(&hr, &bic, shave)?,
        bicubic_ssim: ssim_of(&bic)?,
    })
}

//! WebAssembly bindings for the demo page in `www/`.

mod demo;

use wasm_bindgen::prelude::*;

pub use demo::{fusion_maps, upscale_comparison, FusionMaps, Comparison};

fn js_err(e: String) -> JsError {
    JsError::new(&e)
}

/// `ρ + (1 − ρ)/k²`.
#[wasm_bindgen(js_name = ratioLr)]
pub fn ratio_lr(rho: f64, k: usize) -> f64 {
    lcsc::metrics::param_ratio_lr(rho, k)
}

/// LCSC-to-DenseNet parameter ratio for `L = 1..=max_units`.
#[wasm_bindgen(js_name = ratioLdCurve)]
pub fn ratio_ld_curve(rho: f64, k: usize, max_units: usize) -> Result<Vec<f64>, JsError> {
    demo::ratio_ld_curve(rho, k, max_units).map_err(js_err)
}

/// Aligned-text parameter and Mult&Adds breakdown at 1280×720.
#[wasm_bindgen(js_name = costTable)]
pub fn cost_table(blocks: usize, units: usize, width: usize, rho: f64, scale: usize, fusion: bool) -> Result<String, JsError> {
    demo::cost_table(blocks, units, width, rho, scale, fusion).map_err(js_err)
}

#[wasm_bindgen]
pub struct FusionView(FusionMaps);

#[wasm_bindgen]
impl FusionView {
    pub fn count(&self) -> usize {
        self.0.maps.len()
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    /// RGBA pixels of weight map `k`.
    pub fn rgba(&self, k: usize) -> Vec<u8> {
        self.0.maps.get(k).cloned().unwrap_or_default()
    }

    /// Mean weight of each intermediate output.
    #[wasm_bindgen(js_name = meanWeights)]
    pub fn mean_weights(&self) -> Vec<f64> {
        self.0.means.clone()
    }

    /// Largest deviation of the summed weights from 1.
    #[wasm_bindgen(js_name = sumError)]
    pub fn sum_error(&self) -> f64 {
        self.0.sum_error
    }
}

/// Weight maps of a randomly initialized fusing network on a synthetic image.
#[wasm_bindgen(js_name = fusionMaps)]
pub fn fusion_maps_js(blocks: usize, gate_spread: f64, seed: u64) -> Result<FusionView, JsError> {
    fusion_maps(blocks, gate_spread, seed, 48).map(FusionView).map_err(js_err)
}

#[wasm_bindgen]
pub struct ComparisonView(Comparison);

#[wasm_bindgen]
impl ComparisonView {
    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    /// `"original"`, `"nearest"` or `"bicubic"`.
    pub fn rgba(&self, which: &str) -> Vec<u8> {
        match which {
            "original" => self.0.original.clone(),
            "nearest" => self.0.nearest.clone(),
            "bicubic" => self.0.bicubic.clone(),
            _ => Vec::new(),
        }
    }

    /// `[psnr, ssim]` of nearest and bicubic, in that order.
    pub fn scores(&self) -> Vec<f64> {
        vec![self.0.nearest_psnr, self.0.nearest_ssim, self.0.bicubic_psnr, self.0.bicubic_ssim]
    }
}

/// Downscale a synthetic image and bring it back with nearest and bicubic.
#[wasm_bindgen(js_name = upscaleComparison)]
pub fn upscale_comparison_js(seed: u64, size: usize, scale: usize) -> Result<ComparisonView, JsError> {
    upscale_comparison(seed, size, scale).map(ComparisonView).map_err(js_err)
}

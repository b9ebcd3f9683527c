//! Reconstruction quality (PSNR, SSIM) and efficiency accounting (parameter
//! counts, Mult&Adds, and closed-form parameter ratios).

mod accounting;
mod quality;

pub use accounting::{
    conv_stack_cost, cost_report, count_params, dense_unit_params, giga, lcsc_unit_params, mult_adds,
    param_ratio_ld, param_ratio_ld_blockwise, param_ratio_lr, plain_conv_params, plain_hr_stack, CostLine,
    CostReport, DEFAULT_HR_SIZE,
};
pub use quality::{mse, psnr, ssim, SSIM_SIGMA, SSIM_WINDOW};

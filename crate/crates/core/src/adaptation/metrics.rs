use crate::error::{Error, Result};
use crate::operators::ComplexImage;

/// Reported when the reconstruction error is exactly zero.
pub const PSNR_CAP_DB: f64 = 99.0;

/// `20·log₁₀(max|x| / rms)` with the error taken over both real channels
/// and the mean over pixels.
pub fn psnr(estimate: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    let (h, w) = reference.extents();
    estimate.check_extents("psnr", h, w)?;
    let peak = reference.max_abs();
    if peak == 0.0 {
        return Err(Error::Contract("psnr reference image is identically zero".into()));
    }
    let err = estimate.sub(reference).norm();
    if err == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let rms = err / ((h * w) as f64).sqrt();
    Ok(20.0 * (peak / rms).log10())
}

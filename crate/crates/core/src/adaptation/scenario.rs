use std::sync::Arc;

use crate::data::make_phantom;
use crate::error::{Error, Result};
use crate::operators::{
    make_cartesian_mask, make_coils, make_variable_density_mask, ComplexImage, ForwardOperator, MaskKind, SamplingMask,
};

/// Sampling geometry shared by every acceleration of an experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    /// Fully sampled central columns (Cartesian).
    pub center_lines: usize,
    /// Exponent of the sampling density (variable density).
    pub density_power: f64,
    /// Fully sampled central square per axis (variable density).
    pub center_fraction: f64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            kind: MaskKind::Cartesian1d,
            center_lines: 4,
            density_power: 3.0,
            center_fraction: 0.08,
        }
    }
}

impl MaskSpec {
    pub fn build(&self, height: usize, width: usize, acceleration: f64, seed: u64) -> Result<SamplingMask> {
        match self.kind {
            MaskKind::Cartesian1d => {
                let center = if acceleration > 1.0 {
                    self.center_lines
                        .min(((width as f64 / acceleration).ceil() as usize).saturating_sub(1))
                } else {
                    self.center_lines
                };
                make_cartesian_mask(height, width, acceleration, center, seed)
            }
            MaskKind::VariableDensity2d => make_variable_density_mask(
                height,
                width,
                acceleration,
                self.density_power,
                self.center_fraction,
                seed,
            ),
        }
    }
}

/// `σ` such that `‖Ax‖² / E‖n‖²` equals `snr_db`, with `E‖n‖² = Mσ²`.
pub fn noise_sigma_for_snr(op: &ForwardOperator, x: &ComplexImage, snr_db: f64) -> Result<f64> {
    let signal = op.forward(x)?.norm_sqr();
    if signal == 0.0 {
        return Err(Error::Contract("image has no measured energy".into()));
    }
    Ok((signal / (op.num_measurements() as f64 * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// Phantoms plus a multi-coil acquisition model at a fixed input SNR.
#[derive(Clone, Debug, PartialEq)]
pub struct DeskSetup {
    pub size: usize,
    pub coils: usize,
    pub ellipses: usize,
    pub snr_db: f64,
    pub mask: MaskSpec,
}

impl Default for DeskSetup {
    fn default() -> Self {
        Self {
            size: 64,
            coils: 4,
            ellipses: 6,
            snr_db: 20.0,
            mask: MaskSpec::default(),
        }
    }
}

impl DeskSetup {
    pub fn phantoms(&self, seeds: &[u64]) -> Result<Vec<ComplexImage>> {
        seeds
            .iter()
            .map(|&s| Ok(make_phantom(self.size, self.size, self.ellipses, s)?.image))
            .collect()
    }

    /// Operator with σ set for `snr_db` on `x`.
    pub fn operator_for(&self, x: &ComplexImage, acceleration: f64, mask_seed: u64) -> Result<Arc<ForwardOperator>> {
        let mask = self.mask.build(self.size, self.size, acceleration, mask_seed)?;
        let op = ForwardOperator::new(mask, make_coils(self.size, self.size, self.coils)?, 0.0)?;
        let sigma = noise_sigma_for_snr(&op, x, self.snr_db)?;
        Ok(Arc::new(op.with_noise_sigma(sigma)?))
    }

    /// Operator with σ set for `snr_db` averaged over `images`.
    pub fn shared_operator(
        &self,
        images: &[ComplexImage],
        acceleration: f64,
        mask_seed: u64,
    ) -> Result<Arc<ForwardOperator>> {
        let mask = self.mask.build(self.size, self.size, acceleration, mask_seed)?;
        let op = ForwardOperator::new(mask, make_coils(self.size, self.size, self.coils)?, 0.0)?;
        let mut var = 0.0;
        for x in images {
            var += noise_sigma_for_snr(&op, x, self.snr_db)?.powi(2);
        }
        Ok(Arc::new(
            op.with_noise_sigma((var / images.len().max(1) as f64).sqrt())?,
        ))
    }
}

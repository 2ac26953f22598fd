use std::f64::consts::PI;

use num_complex::Complex64;

use super::image::ComplexImage;
use crate::error::{Error, Result};

/// Per-coil complex sensitivity maps with unit sum-of-squares at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    maps: Vec<ComplexImage>,
}

impl CoilSensitivities {
    /// Normalizes `maps` so that `Σ_c |s_c|² = 1` pixelwise.
    pub fn normalized(maps: Vec<ComplexImage>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Contract("at least one coil required".into()))?;
        let (h, w) = first.extents();
        for m in &maps {
            m.check_extents("coil maps", h, w)?;
        }
        let mut maps = maps;
        for p in 0..h * w {
            let sos: f64 = maps.iter().map(|m| m.data()[p].norm_sqr()).sum::<f64>().sqrt();
            if sos == 0.0 {
                return Err(Error::Contract(format!("coil maps vanish at pixel {p}")));
            }
            maps.iter_mut().for_each(|m| m.data_mut()[p] /= sos);
        }
        Ok(Self { maps })
    }

    /// A single coil with unit sensitivity.
    pub fn single(height: usize, width: usize) -> Self {
        Self {
            maps: vec![ComplexImage::from_fn(height, width, |_, _| Complex64::new(1.0, 0.0))],
        }
    }

    pub fn num_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[ComplexImage] {
        &self.maps
    }

    pub fn extents(&self) -> (usize, usize) {
        self.maps[0].extents()
    }
}

/// Smooth Gaussian lobes placed around the border with a gentle linear phase.
pub fn make_coils(height: usize, width: usize, num_coils: usize) -> Result<CoilSensitivities> {
    if num_coils == 0 {
        return Err(Error::Contract("num_coils must be at least 1".into()));
    }
    let (cy, cx) = (height as f64 / 2.0, width as f64 / 2.0);
    let size = height.max(width) as f64;
    let spread = 0.6 * size;
    let ring = 0.55 * size;
    let maps = (0..num_coils)
        .map(|c| {
            let theta = 2.0 * PI * c as f64 / num_coils as f64 + PI / 4.0;
            let (py, px) = (cy + ring * theta.sin(), cx + ring * theta.cos());
            let (fy, fx) = (0.3 * theta.cos(), -0.3 * theta.sin());
            ComplexImage::from_fn(height, width, |y, x| {
                let (dy, dx) = (y as f64 - py, x as f64 - px);
                let amp = (-(dy * dy + dx * dx) / (2.0 * spread * spread)).exp();
                let phase =
                    2.0 * PI * (fy * y as f64 / height as f64 + fx * x as f64 / width as f64) + c as f64 * PI / 3.0;
                Complex64::from_polar(amp, phase)
            })
        })
        .collect();
    CoilSensitivities::normalized(maps)
}

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::ComplexImage;

/// One rotated ellipse in normalized coordinates (`[-1, 1]` across each axis).
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipse {
    pub center_y: f64,
    pub center_x: f64,
    pub radius_y: f64,
    pub radius_x: f64,
    pub angle: f64,
    pub amplitude: f64,
}

impl Ellipse {
    fn contains(&self, ny: f64, nx: f64) -> bool {
        let (dy, dx) = (ny - self.center_y, nx - self.center_x);
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.radius_x).powi(2) + (v / self.radius_y).powi(2) <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomDescriptor {
    pub height: usize,
    pub width: usize,
    pub ellipses: Vec<Ellipse>,
    /// Smooth phase `phase0 + 2π(ramp_y·y/H + ramp_x·x/W)` applied to the whole image.
    pub phase0: f64,
    pub ramp_y: f64,
    pub ramp_x: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: ComplexImage,
    pub descriptor: PhantomDescriptor,
}

impl Phantom {
    /// Renders the ellipse superposition, clipping magnitudes to 1.
    pub fn from_descriptor(descriptor: PhantomDescriptor) -> Result<Self> {
        let (h, w) = (descriptor.height, descriptor.width);
        if h == 0 || w == 0 || descriptor.ellipses.is_empty() {
            return Err(Error::Contract("phantom needs extents and at least one ellipse".into()));
        }
        let image = ComplexImage::from_fn(h, w, |y, x| {
            let ny = (y as f64 + 0.5) / h as f64 * 2.0 - 1.0;
            let nx = (x as f64 + 0.5) / w as f64 * 2.0 - 1.0;
            let mag: f64 = descriptor
                .ellipses
                .iter()
                .filter(|e| e.contains(ny, nx))
                .map(|e| e.amplitude)
                .sum();
            let mag = mag.clamp(0.0, 1.0);
            let phase = descriptor.phase0
                + 2.0 * PI * (descriptor.ramp_y * y as f64 / h as f64 + descriptor.ramp_x * x as f64 / w as f64);
            Complex64::from_polar(mag, phase)
        });
        Ok(Self { image, descriptor })
    }

    /// Fraction of pixels whose magnitude exceeds `level`.
    pub fn support_fraction(&self, level: f64) -> f64 {
        let n = self.image.data().iter().filter(|c| c.norm() > level).count();
        n as f64 / self.image.len() as f64
    }
}

/// Random head-like phantom: a bright outer ellipse plus `num_ellipses - 1`
/// smaller structures of varying contrast.
pub fn make_phantom(height: usize, width: usize, num_ellipses: usize, seed: u64) -> Result<Phantom> {
    if num_ellipses == 0 {
        return Err(Error::Contract("num_ellipses must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ellipses = vec![Ellipse {
        center_y: rng.random_range(-0.05..0.05),
        center_x: rng.random_range(-0.05..0.05),
        radius_y: rng.random_range(0.7..0.85),
        radius_x: rng.random_range(0.55..0.75),
        angle: rng.random_range(-0.3..0.3),
        amplitude: rng.random_range(0.6..0.8),
    }];
    for _ in 1..num_ellipses {
        ellipses.push(Ellipse {
            center_y: rng.random_range(-0.5..0.5),
            center_x: rng.random_range(-0.4..0.4),
            radius_y: rng.random_range(0.05..0.35),
            radius_x: rng.random_range(0.05..0.3),
            angle: rng.random_range(0.0..PI),
            amplitude: rng.random_range(-0.35..0.35),
        });
    }
    Phantom::from_descriptor(PhantomDescriptor {
        height,
        width,
        ellipses,
        phase0: rng.random_range(-PI..PI),
        ramp_y: rng.random_range(-0.5..0.5),
        ramp_x: rng.random_range(-0.5..0.5),
    })
}

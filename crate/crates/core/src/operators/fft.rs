use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::image::ComplexImage;

/// Planned unitary 2D DFT with the zero frequency at index `(H/2, W/2)`.
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.height, self.width)
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Centered transform of a raw row-major buffer.
    pub fn transform(&self, data: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let (h, w) = (self.height, self.width);
        let (ch, cw) = (h / 2, w / 2);
        // ifftshift on the way in
        let mut buf = vec![Complex64::new(0.0, 0.0); h * w];
        for y in 0..h {
            let sy = (y + ch) % h;
            for x in 0..w {
                buf[y * w + x] = data[sy * w + (x + cw) % w];
            }
        }
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row.process(&mut buf);
        let mut t = vec![Complex64::new(0.0, 0.0); h * w];
        for y in 0..h {
            for x in 0..w {
                t[x * h + y] = buf[y * w + x];
            }
        }
        col.process(&mut t);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        // fftshift on the way out, undoing the transpose
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for y in 0..h {
            let sy = (y + h - ch) % h;
            for x in 0..w {
                let sx = (x + w - cw) % w;
                out[y * w + x] = t[sx * h + sy] * scale;
            }
        }
        out
    }

    pub fn forward(&self, img: &ComplexImage) -> ComplexImage {
        debug_assert_eq!(img.extents(), (self.height, self.width));
        ComplexImage::new(self.height, self.width, self.transform(img.data(), false)).expect("extents preserved")
    }

    pub fn inverse(&self, img: &ComplexImage) -> ComplexImage {
        debug_assert_eq!(img.extents(), (self.height, self.width));
        ComplexImage::new(self.height, self.width, self.transform(img.data(), true)).expect("extents preserved")
    }
}

pub fn fft2_centered(img: &ComplexImage) -> ComplexImage {
    Fft2::new(img.height(), img.width()).forward(img)
}

pub fn ifft2_centered(img: &ComplexImage) -> ComplexImage {
    Fft2::new(img.height(), img.width()).inverse(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn naive_dft(img: &ComplexImage) -> ComplexImage {
        let (h, w) = img.extents();
        let (ch, cw) = ((h / 2) as f64, (w / 2) as f64);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        ComplexImage::from_fn(h, w, |ky, kx| {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0
                        * PI
                        * ((ky as f64 - ch) * (y as f64 - ch) / h as f64
                            + (kx as f64 - cw) * (x as f64 - cw) / w as f64);
                    acc += img.at(y, x) * Complex64::from_polar(1.0, phase);
                }
            }
            acc * scale
        })
    }

    #[test]
    fn constant_image_concentrates_at_center() {
        let n = 8;
        let c = 0.75;
        let k = fft2_centered(&ComplexImage::from_fn(n, n, |_, _| Complex64::new(c, 0.0)));
        for y in 0..n {
            for x in 0..n {
                let v = k.at(y, x).norm();
                if (y, x) == (n / 2, n / 2) {
                    assert!((v - c * n as f64).abs() < 1e-12);
                } else {
                    assert!(v < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parseval_and_inverse() {
        for &(h, w) in &[(8, 8), (16, 12), (5, 7)] {
            let x = random_image(h, w, (h * w) as u64);
            let k = fft2_centered(&x);
            assert!((k.norm() - x.norm()).abs() < 1e-12 * x.norm().max(1.0));
            let back = ifft2_centered(&k);
            assert!(back.sub(&x).norm() < 1e-12 * x.norm());
        }
    }

    #[test]
    fn matches_naive_dft() {
        for &(h, w, seed) in &[(8, 8, 1u64), (6, 5, 2)] {
            let x = random_image(h, w, seed);
            let fast = fft2_centered(&x);
            let slow = naive_dft(&x);
            assert!(fast.sub(&slow).norm() < 1e-10, "{h}x{w}");
        }
    }
}

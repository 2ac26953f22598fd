use num_complex::Complex64;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Complex-valued 2D image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Contract("image extents must be positive".into()));
        }
        if data.len() != height * width {
            return Err(Error::dim("complex image", &[height * width], &[data.len()]));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![Complex64::new(0.0, 0.0); height * width]).expect("positive extents")
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data).expect("positive extents")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn at(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    pub fn check_extents(&self, op: &'static str, h: usize, w: usize) -> Result<()> {
        if (self.height, self.width) != (h, w) {
            return Err(Error::dim(op, &[h, w], &[self.height, self.width]));
        }
        Ok(())
    }

    /// Planar real layout: all real parts, then all imaginary parts.
    pub fn to_channels(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        out.extend(self.data.iter().map(|c| c.re));
        out.extend(self.data.iter().map(|c| c.im));
        out
    }

    pub fn from_channels(height: usize, width: usize, channels: &[f64]) -> Result<Self> {
        let n = height * width;
        if channels.len() != 2 * n {
            return Err(Error::dim("from_channels", &[2 * n], &[channels.len()]));
        }
        let data = (0..n).map(|i| Complex64::new(channels[i], channels[n + i])).collect();
        Self::new(height, width, data)
    }

    /// `[1, 2, H, W]` tensor with channel 0 real and channel 1 imaginary.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, 2, self.height, self.width], self.to_channels()).expect("consistent")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 4 || s[0] != 1 || s[1] != 2 {
            return Err(Error::dim("from_tensor", &[1, 2, 0, 0], s));
        }
        Self::from_channels(s[2], s[3], t.data())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `Σ conj(self) · other`.
    pub fn inner(&self, other: &ComplexImage) -> Complex64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, k: f64) -> ComplexImage {
        self.map(|c| c * k)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ComplexImage, f: impl Fn(Complex64, Complex64) -> Complex64) -> ComplexImage {
        debug_assert_eq!(self.extents(), other.extents());
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &ComplexImage) -> ComplexImage {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexImage) -> ComplexImage {
        self.zip_map(other, |a, b| a - b)
    }

    /// Magnitudes, row-major.
    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

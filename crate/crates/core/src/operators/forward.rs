use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::coils::CoilSensitivities;
use super::fft::Fft2;
use super::image::ComplexImage;
use super::mask::SamplingMask;
use crate::autodiff::LinearMap;
use crate::error::{Error, Result};

/// Dense per-coil k-space, zero wherever the mask skips a location.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData {
    coils: Vec<ComplexImage>,
    noise_sigma: f64,
}

impl KSpaceData {
    pub fn new(coils: Vec<ComplexImage>, noise_sigma: f64) -> Result<Self> {
        let first = coils
            .first()
            .ok_or_else(|| Error::Contract("k-space needs at least one coil".into()))?;
        let (h, w) = first.extents();
        for c in &coils {
            c.check_extents("k-space coils", h, w)?;
        }
        Ok(Self { coils, noise_sigma })
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn num_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn extents(&self) -> (usize, usize) {
        self.coils[0].extents()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coils.iter().map(ComplexImage::norm_sqr).sum()
    }

    /// `Σ_c Σ_k conj(self) · other`.
    pub fn inner(&self, other: &KSpaceData) -> Complex64 {
        self.coils.iter().zip(&other.coils).map(|(a, b)| a.inner(b)).sum()
    }

    pub fn sub(&self, other: &KSpaceData) -> KSpaceData {
        KSpaceData {
            coils: self.coils.iter().zip(&other.coils).map(|(a, b)| a.sub(b)).collect(),
            noise_sigma: self.noise_sigma,
        }
    }

    /// Copy with locations outside `mask` set to zero.
    pub fn masked(&self, mask: &SamplingMask) -> KSpaceData {
        let coils = self
            .coils
            .iter()
            .map(|c| {
                let mut c = c.clone();
                for (v, &k) in c.data_mut().iter_mut().zip(mask.kept()) {
                    if !k {
                        *v = Complex64::new(0.0, 0.0);
                    }
                }
                c
            })
            .collect();
        KSpaceData {
            coils,
            noise_sigma: self.noise_sigma,
        }
    }

    /// `[C, 2, H, W]` planar real layout.
    pub fn to_channels(&self) -> Vec<f64> {
        self.coils.iter().flat_map(|c| c.to_channels()).collect()
    }

    pub fn from_channels(num_coils: usize, h: usize, w: usize, data: &[f64], noise_sigma: f64) -> Result<Self> {
        let per = 2 * h * w;
        if data.len() != num_coils * per {
            return Err(Error::dim("k-space channels", &[num_coils * per], &[data.len()]));
        }
        let coils = data
            .chunks(per)
            .map(|c| ComplexImage::from_channels(h, w, c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coils, noise_sigma)
    }
}

/// Coil modulation, centered unitary FFT, then the sampling mask.
#[derive(Clone, Debug)]
pub struct ForwardOperator {
    mask: SamplingMask,
    coils: CoilSensitivities,
    noise_sigma: f64,
    fft: Arc<Fft2>,
}

impl ForwardOperator {
    pub fn new(mask: SamplingMask, coils: CoilSensitivities, noise_sigma: f64) -> Result<Self> {
        let (h, w) = coils.extents();
        if (mask.height(), mask.width()) != (h, w) {
            return Err(Error::dim("forward operator", &[h, w], &[mask.height(), mask.width()]));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Contract(format!(
                "noise sigma {noise_sigma} must be finite and >= 0"
            )));
        }
        Ok(Self {
            mask,
            coils,
            noise_sigma,
            fft: Arc::new(Fft2::new(h, w)),
        })
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn coils(&self) -> &CoilSensitivities {
        &self.coils
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn num_coils(&self) -> usize {
        self.coils.num_coils()
    }

    pub fn extents(&self) -> (usize, usize) {
        self.coils.extents()
    }

    /// Number of acquired complex samples across all coils.
    pub fn num_measurements(&self) -> usize {
        self.mask.count() * self.num_coils()
    }

    pub fn with_mask(&self, mask: SamplingMask) -> Result<Self> {
        Self::new(mask, self.coils.clone(), self.noise_sigma)
    }

    pub fn with_noise_sigma(&self, noise_sigma: f64) -> Result<Self> {
        Self::new(self.mask.clone(), self.coils.clone(), noise_sigma)
    }

    fn check_image(&self, op: &'static str, x: &ComplexImage) -> Result<()> {
        let (h, w) = self.extents();
        x.check_extents(op, h, w)
    }

    fn check_kspace(&self, op: &'static str, y: &KSpaceData) -> Result<()> {
        let (h, w) = self.extents();
        if y.num_coils() != self.num_coils() {
            return Err(Error::dim(op, &[self.num_coils()], &[y.num_coils()]));
        }
        y.coils[0].check_extents(op, h, w)
    }

    fn apply_mask(&self, data: &mut [Complex64]) {
        for (v, &k) in data.iter_mut().zip(self.mask.kept()) {
            if !k {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Noiseless `A x`: per coil, `mask ⊙ F(s_c ⊙ x)`.
    pub fn forward(&self, x: &ComplexImage) -> Result<KSpaceData> {
        self.check_image("apply_forward", x)?;
        let (h, w) = self.extents();
        let coils = self
            .coils
            .maps()
            .iter()
            .map(|s| {
                let modulated: Vec<Complex64> = s.data().iter().zip(x.data()).map(|(a, b)| a * b).collect();
                let mut k = self.fft.transform(&modulated, false);
                self.apply_mask(&mut k);
                ComplexImage::new(h, w, k).expect("extents")
            })
            .collect();
        KSpaceData::new(coils, 0.0)
    }

    /// `Aᴴ y = Σ_c conj(s_c) ⊙ F⁻¹(mask ⊙ y_c)`.
    pub fn adjoint(&self, y: &KSpaceData) -> Result<ComplexImage> {
        self.check_kspace("apply_adjoint", y)?;
        let (h, w) = self.extents();
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for (s, yc) in self.coils.maps().iter().zip(y.coils()) {
            let mut masked = yc.data().to_vec();
            self.apply_mask(&mut masked);
            let img = self.fft.transform(&masked, true);
            for ((o, sv), iv) in out.iter_mut().zip(s.data()).zip(&img) {
                *o += sv.conj() * iv;
            }
        }
        ComplexImage::new(h, w, out)
    }

    /// `AᴴA x`.
    pub fn normal(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.adjoint(&self.forward(x)?)
    }

    /// `A x + n` with circular complex Gaussian noise, `E|n_k|² = σ²`,
    /// drawn only at acquired locations.
    pub fn simulate(&self, x: &ComplexImage, seed: u64) -> Result<KSpaceData> {
        let mut y = self.forward(x)?;
        y.noise_sigma = self.noise_sigma;
        if self.noise_sigma == 0.0 {
            return Ok(y);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.noise_sigma / std::f64::consts::SQRT_2).expect("finite sigma");
        for c in y.coils.iter_mut() {
            for (v, &k) in c.data_mut().iter_mut().zip(self.mask.kept()) {
                if k {
                    *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                }
            }
        }
        Ok(y)
    }

    /// Real-layout view of `A` for recording on a tape.
    pub fn forward_map(self: &Arc<Self>) -> Arc<dyn LinearMap> {
        Arc::new(ForwardMap(self.clone()))
    }

    /// Real-layout view of `AᴴA + shift·I` for recording on a tape.
    pub fn normal_map(self: &Arc<Self>, shift: f64) -> Arc<dyn LinearMap> {
        Arc::new(NormalMap {
            op: self.clone(),
            shift,
        })
    }
}

struct ForwardMap(Arc<ForwardOperator>);

impl LinearMap for ForwardMap {
    fn input_shape(&self) -> Vec<usize> {
        let (h, w) = self.0.extents();
        vec![1, 2, h, w]
    }

    fn output_shape(&self) -> Vec<usize> {
        let (h, w) = self.0.extents();
        vec![self.0.num_coils(), 2, h, w]
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        let (h, w) = self.0.extents();
        let x = ComplexImage::from_channels(h, w, input).expect("shape checked by tape");
        self.0.forward(&x).expect("extents").to_channels()
    }

    fn apply_adjoint(&self, output: &[f64]) -> Vec<f64> {
        let (h, w) = self.0.extents();
        let y = KSpaceData::from_channels(self.0.num_coils(), h, w, output, 0.0).expect("shape");
        self.0.adjoint(&y).expect("extents").to_channels()
    }
}

struct NormalMap {
    op: Arc<ForwardOperator>,
    shift: f64,
}

impl LinearMap for NormalMap {
    fn input_shape(&self) -> Vec<usize> {
        let (h, w) = self.op.extents();
        vec![1, 2, h, w]
    }

    fn output_shape(&self) -> Vec<usize> {
        self.input_shape()
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        let (h, w) = self.op.extents();
        let x = ComplexImage::from_channels(h, w, input).expect("shape checked by tape");
        let mut out = self.op.normal(&x).expect("extents").to_channels();
        if self.shift != 0.0 {
            out.iter_mut().zip(input).for_each(|(o, i)| *o += self.shift * i);
        }
        out
    }

    fn apply_adjoint(&self, output: &[f64]) -> Vec<f64> {
        self.apply(output)
    }
}

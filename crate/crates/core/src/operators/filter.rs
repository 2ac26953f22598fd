use std::sync::Arc;

use super::forward::ForwardOperator;
use super::image::ComplexImage;
use crate::autodiff::LinearMap;
use crate::error::{Error, Result};

/// Polynomial stand-in for the range projector of `N = AᴴA`:
/// `P_K = I − (I − N)^K` and `G_K = Σ_{k<K} (I − N)^k`, so `G_K N = P_K`.
///
/// Needs `‖N‖ ≤ 1`, which holds for unitary FFTs and sum-of-squares
/// normalized coils. Eigenvalues at 0 and 1 map exactly to 0 and 1, and
/// `‖G_K‖ ≤ K` bounds the noise gain on poorly conditioned directions.
#[derive(Clone, Debug)]
pub struct SpectralFilter {
    op: Arc<ForwardOperator>,
    order: usize,
}

impl SpectralFilter {
    pub fn new(op: Arc<ForwardOperator>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Contract("spectral filter order must be at least 1".into()));
        }
        Ok(Self { op, order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `P_K x`.
    pub fn project(&self, x: &ComplexImage) -> Result<ComplexImage> {
        let mut r = x.clone();
        for _ in 0..self.order {
            r = r.sub(&self.op.normal(&r)?);
        }
        Ok(x.sub(&r))
    }

    /// `G_K v`, the filtered least-squares estimate when `v = Aᴴy`.
    pub fn pinv(&self, v: &ComplexImage) -> Result<ComplexImage> {
        let mut term = v.clone();
        let mut acc = v.clone();
        for _ in 1..self.order {
            term = term.sub(&self.op.normal(&term)?);
            acc = acc.add(&term);
        }
        Ok(acc)
    }

    /// `P_K` as a tape node (it is self-adjoint).
    pub fn projection_map(&self) -> Arc<dyn LinearMap> {
        Arc::new(self.clone())
    }
}

impl LinearMap for SpectralFilter {
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
        self.project(&x).expect("extents").to_channels()
    }

    fn apply_adjoint(&self, output: &[f64]) -> Vec<f64> {
        self.apply(output)
    }
}

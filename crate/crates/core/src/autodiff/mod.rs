//! Reverse-mode differentiation over dense `f64` tensors.

mod adam;
pub mod conv;
mod dense;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::DenseMap;
pub use params::NetworkParams;
pub use tape::{Gradients, LinearMap, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) mod tests_support;

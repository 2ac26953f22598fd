//! Noise-aware adaptation of pre-trained reconstruction networks to new
//! MRI acquisition operators, with DIP and SSDU style baselines.

pub mod adaptation;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod networks;
pub mod operators;
pub mod parallel;
pub mod verify;

pub use error::{Error, Result};

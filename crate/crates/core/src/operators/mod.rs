//! Simulated multi-coil Cartesian MRI acquisition.

mod cg;
mod coils;
mod fft;
mod filter;
mod forward;
mod image;
mod mask;

pub use cg::{
    cg_on_tape, conjugate_gradient, pinv_normal, project_range, regularized_solve, CgOutcome, CgWarning,
    DEFAULT_CG_ITERS, DEFAULT_CG_TOL,
};
pub use coils::{make_coils, CoilSensitivities};
pub use fft::{fft2_centered, ifft2_centered, Fft2};
pub use filter::SpectralFilter;
pub use forward::{ForwardOperator, KSpaceData};
pub use image::ComplexImage;
pub use mask::{make_cartesian_mask, make_variable_density_mask, MaskKind, SamplingMask};

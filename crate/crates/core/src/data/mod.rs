//! Synthetic phantoms, dataset splits, and file formats.

pub mod pgm;
mod phantom;
mod split;
pub mod tnsr;

pub use phantom::{make_phantom, Ellipse, Phantom, PhantomDescriptor};
pub use split::{make_split, DatasetSplit, PhantomSpec};
pub use tnsr::{read_tnsr, write_tnsr, Payload, Record};

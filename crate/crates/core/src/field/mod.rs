//! Uniform-grid geometry, complex field storage, finite-difference operators
//! and the spectral transforms shared by the rest of the crate.

mod diff;
mod grid;
mod plane;
mod spectral;
mod volume;

pub use diff::{divergence3, gradient3, laplacian7, log_gradient3, plane_gradient};
pub use grid::{Grid3, DEFAULT_NODES, DOMAIN_HI, DOMAIN_LO};
pub use plane::{PlaneField, PlaneGrid, Rect2, MEASUREMENT_RECT, PROPAGATED_RECT};
pub use spectral::{dft2_forward, dft2_inverse, dft_time, wrapped_frequencies, Fft3, Spectrum2};
pub use volume::VolumeWave;
pub(crate) use volume::dot3;

pub use num_complex::Complex64 as C64;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid too small for the stencil: need >= {need} nodes per axis, got {got:?}")]
    GridTooSmall { need: usize, got: Vec<usize> },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("value count {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("field vanishes at node {node:?} (|u| = {modulus:e})")]
    VanishingField { node: Vec<usize>, modulus: f64 },
}

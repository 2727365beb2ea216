//! Reconstruction of the dielectric constant of buried or hidden targets from
//! single-measurement, multi-frequency backscatter data of the 3D Helmholtz
//! equation.
//!
//! The crate is organised bottom-up:
//!
//! - [`field`]: grids, complex fields, finite differences and transforms.
//! - [`linalg`]: restarted GMRES and a small dense LU used as an oracle.
//! - [`forward`]: Lippmann–Schwinger solver and exterior evaluation.
//! - [`timeprep`]: time-domain trace preprocessing.
//! - [`freqprep`]: propagation, interval selection, calibration, boundary data.
//! - [`gcm`]: the globally convergent inversion itself.
//! - [`pipeline`]: scenes, synthesis, configuration, file formats and reports.

pub mod field;
pub mod linalg;
pub mod forward;
pub mod timeprep;
pub mod freqprep;
pub mod gcm;
pub mod pipeline;

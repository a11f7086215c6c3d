//! Compressive image scanning microscopy.
//!
//! Simulates a SPAD-array laser-scanning microscope, subsamples the scan with a
//! fixed skip-alternate-rows/columns pattern, reconstructs every detector-element
//! image by equality-constrained total-variation minimization and fuses the
//! parallel images with adaptive pixel reassignment.
//!
//! Module map:
//!
//! * [`image`], [`rng`], [`io`]: rasters, seeded randomness and file formats.
//! * [`psf`]: per-element point spread functions of the detector array.
//! * [`phantom`]: tubulin-like filament ground truth.
//! * [`forward`]: convolution and Poisson acquisition.
//! * [`sampling`]: the selection operator `A` and its adjoint.
//! * [`solver`]: TV minimization subject to `Ax = y`.
//! * [`apr`]: shift estimation and shift-and-sum fusion.
//! * [`metrics`]: relative error, summary statistics, FWHM.
//! * [`pipeline`]: configuration and the end-to-end commands.

pub mod apr;
pub mod error;
mod fft;
pub mod forward;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod psf;
pub mod rng;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use image::{Image2D, IsmDataset};
pub use rng::RandomSeed;

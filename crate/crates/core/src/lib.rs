//! Spatial phase-sweep transient imaging.
//!
//! A correlation time-of-flight camera can only shift the phase between its
//! illumination code and its sensor reference in coarse PLL steps (about
//! 96 ps). Displacing the light source along the optical axis by a few
//! millimetres inserts an additional, much finer delay `n·Δd/c`. Sweeping a
//! small array of sources and interleaving the resulting measurements samples
//! the correlation profile an order of magnitude more finely than the PLL
//! alone.
//!
//! # Pipeline
//!
//! 1. [`codes`]: m-sequence generation and the code correlation kernel `h(x)`.
//! 2. [`scene`]: per-pixel sparse light paths (terraced target, planar
//!    targets, mirror virtual sources, subsurface scattering).
//! 3. [`sensor`]: the PMD correlation measurement and PLL phase sweep.
//! 4. [`sweep`]: multi-source acquisition, equalization and interleaving.
//! 5. [`recon`]: OMP peak fitting, depth, wavefront frames, spectra, hue maps.
//! 6. [`analysis`]: systematic error of the uniform insertion-delay model.
//!
//! [`io`] holds the CSV, binary and Netpbm writers shared by all stages.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod codes;
pub mod error;
pub mod io;
pub mod recon;
pub mod scene;
pub mod sensor;
pub mod sweep;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// 3-vector in metres.
pub type Vec3 = nalgebra::Vector3<f64>;

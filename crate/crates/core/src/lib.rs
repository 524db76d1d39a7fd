//! Core algorithms for portrait-to-avatar reconstruction pipelines: triangle
//! meshes with UV atlases, a software rasterizer with visibility queries,
//! geometry-aligned UV feature scattering (core + shell branches), UV-anchored
//! Gaussian splats with a CPU renderer, loss/regularizer formulas, and a
//! three-stage robust proxy-mesh fitting optimizer built on forward-mode
//! automatic differentiation.
//!
//! The crate is `no_std` (with `alloc`); all file formats, IO, and the CLI
//! live in the companion `avatar-cli` crate. Everything here is deterministic:
//! all randomness flows through explicit seeds, and no internal parallelism
//! is used, so repeated runs produce bit-identical results.

#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod camera;
pub mod error;
pub mod gaussian;
pub mod geom;
pub mod losses;
pub mod math;
pub mod raster;
pub mod sampler;
pub mod skin;
pub mod tracker;
pub mod uvscatter;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

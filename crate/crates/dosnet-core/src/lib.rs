//! Operator-splitting solvers for evolutionary PDEs with decomposable
//! operators, the learnable DOSnet architecture built from them, and an
//! end-to-end optical fiber transmission simulator for training and
//! evaluating nonlinear compensation.
//!
//! The crate is organized around the numerical substrate in [`field`]
//! (periodic grids, DFTs, norms) and [`rng`] (seeded, platform-stable
//! randomness), the exact sub-flow catalog in [`pde`], splitting-scheme
//! drivers in [`solvers`], a minimal reverse-mode engine in [`autodiff`],
//! the network itself in [`model`], dataset construction in [`datagen`],
//! the transmission chain in [`fiberlink`], and quantitative diagnostics
//! in [`analysis`].
//!
//! Data-parallel inner loops (batch gradients, dataset generation, BER
//! sweeps) run on rayon when the default `parallel` feature is enabled;
//! disabling the feature compiles the same code paths sequentially, and
//! [`exec::force_sequential`] switches at runtime for benchmarking. Both
//! modes produce bit-identical results: parallel work is always split over
//! independent output slices and reduced in a fixed order.

mod binio;

pub mod analysis;
pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod fiberlink;
pub mod field;
pub mod model;
pub mod pde;
pub mod rng;
pub mod solvers;

pub use error::{DosnetError, Result};

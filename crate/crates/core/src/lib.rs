//! Three-dimensional Fourier scattering features for hyperspectral cubes,
//! with the classification, sampling and evaluation machinery around them.
//!
//! The transform cascades modulated rectangular windows, modulus
//! nonlinearities and local averages over `(row, col, band)` volumes,
//! downsampling only along the band axis. See [`scatter::scatter`].

#![allow(clippy::single_range_in_vec_init)]

pub mod conv;
pub mod error;
pub mod exec;
pub mod features;
pub mod filterbank;
pub mod hsi;
pub mod metrics;
pub mod pipeline;
pub mod sampling;
pub mod scatter;
pub mod svm;
pub mod synth;

pub use error::{ErrorKind, FstError, Result};
pub use exec::Execution;
pub use filterbank::{
    build_bank, enumerate_paths, frame_bound, FilterBank, LayerSpec, ModIndex, PathRule,
    ScatterConfig, WindowType,
};
pub use hsi::{load_cube, load_labels, save_cube, save_labels, HsiCube, LabelMap};
pub use scatter::{
    energy_report, receptive_field, scatter, scatter_gabor, scatter_patched, EnergyReport,
    FeatureCube, FeatureLayout, Transform,
};
pub use synth::{generate_synthetic, SynthSpec};

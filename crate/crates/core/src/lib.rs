//! Desk-scale dynamic ghost-imaging laboratory.
//!
//! Scenes are synthesized ([`scene`]), measured through structured
//! illumination ([`patterns`], [`measurement`]) by analog or photon-counting
//! detectors ([`qdetector`]), optionally variance-stabilized
//! ([`normalize`]), and reconstructed either per frame by classical solvers
//! ([`recon`]) or jointly by a small spatio-temporal transformer
//! ([`dynghost`]). [`metrics`] scores reconstructions and [`experiment`]
//! drives the comparison protocols behind the `ghostlab` binary.

pub mod error;
pub mod image;
pub mod linalg;
pub mod rng;
pub mod tensor;

pub mod dynghost;
pub mod experiment;
pub mod measurement;
pub mod metrics;
pub mod normalize;
pub mod patterns;
pub mod qdetector;
pub mod recon;
pub mod scene;

pub use error::{GhostError, Result};
pub use image::Image;
pub use rng::RngStream;
pub use tensor::TensorF;

//! Internal, whole-cloud point cloud upsampling.
//!
//! A single input cloud is downsampled into several low/high resolution
//! training pairs, a small progressive graph generator is trained on those
//! pairs (optionally against a discriminator), and the trained generator is
//! then applied to the original cloud to produce a denser one.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: point clouds, exact kNN, farthest point sampling,
//!   downsampling kernels, normalization and augmentation.
//! - [`mesh`]: OBJ/OFF/PLY triangle meshes, surface sampling and exact
//!   point-to-surface distance.
//! - [`autodiff`]: a tape-based reverse-mode differentiator over dense
//!   `f64` tensors, Adam, finite-difference checking and checkpoints.
//! - [`network`]: generator and discriminator.
//! - [`losses`]: EMD, Chamfer, repulsion, uniform, adversarial and the
//!   weighted joint loss.
//! - [`metrics`]: evaluation measures and report serialization.
//! - [`trainer`]: the self-training loop, upsampling and ablations.
//! - [`io`]: file dispatch by extension.
//! - [`checks`]: finite-difference gradient suites.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checks;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod network;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud};

pub use mesh::TriangleMesh;

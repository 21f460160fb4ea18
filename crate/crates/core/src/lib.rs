//! Algorithmic core for renal vessel segmentation and vascular territory
//! estimation on 3D voxel grids.
//!
//! The crate is `no_std` with `alloc`. Everything here is a pure function of
//! its inputs; file formats, configuration and the command line live in the
//! `renovor` companion crate. Enabling the `parallel` feature lets per-voxel
//! maps run on rayon; results are bit-identical to sequential execution.
//!
//! Module map:
//! - [`volume`]: grids, geometry, bounding boxes, cropping, components, dilation
//! - [`linalg`]: small symmetric 3x3 matrices and the Jacobi eigen solver
//! - [`vesselness`]: Gaussian smoothing, Hessian fields, Sato's tubularity
//! - [`spd`]: affine-invariant geometry of SPD tensors, Fréchet mean
//! - [`gmm`]: 1D Gaussian mixtures fitted by EM
//! - [`maxflow`]: exact s-t max-flow / min-cut (Boykov-Kolmogorov)
//! - [`tensorcut`]: MRF energy with intensity and tensor terms, graph-cut solve
//! - [`skeleton`], [`tree`]: thinning, centerline graph, entries, branch clustering
//! - [`nearest`], [`voronoi`]: exact nearest-site search, territory partition, statistics
//! - [`metrics`]: Dice, sensitivity, Hausdorff, centerline overlap
//! - [`fcnmath`]: spatial feature map, Dice loss, sliding windows, augmentation
//! - [`phantom`]: synthetic kidney / vessel-tree generator
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
mod math;
mod par;

pub mod fcnmath;
pub mod gmm;
pub mod linalg;
pub mod maxflow;
pub mod metrics;
pub mod nearest;
pub mod phantom;
pub mod skeleton;
pub mod spd;
pub mod tensorcut;
pub mod tree;
pub mod vesselness;
pub mod volume;
pub mod voronoi;

pub use error::{Error, Result};
pub use volume::{BoundingBox, Connectivity, LabelVolume, ScalarVolume, Volume, VolumeGeometry};

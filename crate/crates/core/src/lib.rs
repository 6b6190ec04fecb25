//! Spherical window transform (SWT) for equirectangular (ERP) images.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! * [`geom`]: latitude/longitude, unit vectors, the yaw/pitch rotations and a
//!   gnomonic sampling grid used as a timing baseline.
//! * [`swt`]: the equator template, per-window transforms, quantized index maps
//!   (naive and yaw-roll decomposed) and feature resampling.
//! * [`tensor`]: `H×W×C` feature maps, window partitioning and multi-head
//!   attention.
//! * [`crf`]: the planar/spherical window attention block and a small
//!   multi-level decoder, forward only.
//! * [`metrics`]: depth error metrics, median alignment and the SILog loss.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod crf;
pub mod error;
pub mod geom;
mod math;
pub mod metrics;
pub mod swt;
pub mod tensor;

pub use error::{Error, Result};
pub use geom::{AngleCoord, ErpGridSpec, RotationMatrix, UnitVec3};
pub use swt::{IndexMap, SampleGrid, SampleMode, Template, TemplateConfig};
pub use tensor::{FeatureMap, WindowSet};

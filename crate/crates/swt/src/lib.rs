//! IO, benchmarking and parallel map generation on top of [`swt_core`].
//!
//! File formats:
//!
//! * `SWTM`: precomputed SWT index maps ([`io::swtm`]).
//! * `FMAP`: raw `f32` feature tensors ([`io::fmap`]).
//! * PFM and 8/16-bit PNG rasters ([`io::pfm`], [`io::raster`]).
//! * Decoder parameter bundles ([`io::bundle`]).
//! * Metric and benchmark reports ([`report`]).

pub mod bench;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;

pub use error::{Result, ToolError};

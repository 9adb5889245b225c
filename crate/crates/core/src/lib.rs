//! Context-preserving cut-paste augmentation for grayscale images.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs plus an explicit seed; file formats, decoding and
//! the command line live in the `hybridaug` companion crate.
//!
//! Pipeline overview:
//!
//! 1. [`geometry`] cleans a thorax mask (hole filling, largest component),
//!    takes its convex hull and measures eccentricity and a best-fit circle.
//! 2. [`synthesis`] cuts each eligible image into a circular donor and an
//!    acceptor with a cavity, then pastes scaled and rotated donors into
//!    random acceptors. Hybrids inherit the donor's label.
//! 3. [`sampler`] plans offline hybrid datasets and builds per-epoch batch
//!    schedules for the online strategies; [`tradaug`] is the traditional
//!    augmentation baseline.
//! 4. [`stream`] frames realized batches for external trainers and
//!    [`metrics`] evaluates predictions and compares replicate summaries.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod geometry;
pub mod image;
pub(crate) mod math;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod sampler;
pub mod stream;
pub mod synthesis;
pub mod tradaug;

pub use corpus::{ClassLabel, ImageRecord, Manifest};
pub use geometry::{BinaryMask, CircleFit, HullPolygon, ShapeStats};
pub use image::GrayImage;

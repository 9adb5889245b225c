//! Files, streaming and the `hybridaug` command line on top of
//! `hybridaug-core`.
//!
//! Layout of what the commands read and write:
//!
//! - manifests are JSON Lines, record paths relative to the manifest's directory
//! - images and masks are 8-bit grayscale PNG
//! - template stores hold `donors/<id>.{png,json}` and `acceptors/<id>.{png,json}`
//! - batch streams use the framing in [`hybridaug_core::stream`]

pub mod audit;
pub mod augment;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod generate;
pub mod io;
pub mod offline;
pub mod plot;
pub mod serve;

pub use error::{Error, Result};

//! Traditional augmentation over files.

use std::path::{Path, PathBuf};

use hybridaug_core::rng::{hash_str, rng_for};
use hybridaug_core::tradaug::{apply_traditional, TradAugConfig};
use rayon::prelude::*;

use crate::error::Result;
use crate::io::{read_gray, write_gray, write_json};

/// Augments each `(id, path)` input into `<out>/<id>.png` with an
/// `<id>.json` record of the applied operations. The generator for an
/// input depends only on `(seed, id)`.
pub fn augment_files(inputs: &[(String, PathBuf)], cfg: &TradAugConfig, seed: u64, out: &Path) -> Result<usize> {
    inputs.par_iter().try_for_each(|(id, path)| -> Result<()> {
        let img = read_gray(path)?;
        let mut rng = rng_for(seed, &[hash_str(id)]);
        let (aug, record) = apply_traditional(&img, cfg, &mut rng);
        write_gray(&out.join(format!("{id}.png")), &aug)?;
        write_json(&out.join(format!("{id}.json")), &record)
    })?;
    Ok(inputs.len())
}

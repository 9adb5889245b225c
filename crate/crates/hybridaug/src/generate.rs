//! Phantom corpus on disk.

use std::path::Path;

use hybridaug_core::phantom::{render_record, PhantomConfig, PhantomRecord};
use hybridaug_core::Manifest;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{write_gray, write_jsonl, write_manifest, write_mask};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

/// Renders every record of `config` into `out`: `images/`, `masks/`,
/// `manifest.jsonl` and `ground_truth.jsonl`.
pub fn generate_corpus(config: &PhantomConfig, out: &Path) -> Result<Vec<PhantomRecord>> {
    config.validate().map_err(|e| Error::data("phantom config", e))?;
    let records: Vec<PhantomRecord> = (0..config.total())
        .into_par_iter()
        .map(|i| {
            let (rec, image, mask) = render_record(config, i).map_err(|e| Error::data(format!("record {i}"), e))?;
            write_gray(&out.join(&rec.record.path), &image)?;
            if let Some(mp) = &rec.record.mask_path {
                write_mask(&out.join(mp), &mask)?;
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest::new(records.iter().map(|r| r.record.clone()).collect(), "phantom")
        .map_err(|e| Error::data("phantom manifest", e))?;
    write_manifest(&out.join(MANIFEST_FILE), &manifest)?;
    let truth: Vec<_> = records.iter().map(PhantomRecord::ground_truth_line).collect();
    write_jsonl(&out.join(GROUND_TRUTH_FILE), &truth)?;
    Ok(records)
}

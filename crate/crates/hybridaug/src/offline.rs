//! Offline hybrid dataset materialization.

use std::path::Path;

use hybridaug_core::rng::{choose_indices, rng_for};
use hybridaug_core::sampler::{offline_blueprints, plan_offline, HybridBlueprint, OfflinePlan, TemplatePool};
use hybridaug_core::{ClassLabel, ImageRecord, Manifest};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{resolve, write_gray, write_json, write_manifest, write_text};

const ORIGINALS_KEY: u64 = 0x0819_17A1;

/// `(label, donors, originals)` rows: donors from the pool, originals from
/// `originals` or, when absent, every record of the class in `manifest`.
pub fn plan_inputs(
    pool: &TemplatePool,
    manifest: &Manifest,
    originals: Option<&[u64; 6]>,
) -> Vec<(ClassLabel, u64, u64)> {
    ClassLabel::ALL
        .into_iter()
        .map(|l| {
            let donors = pool.donors.iter().filter(|d| d.label == l).count() as u64;
            let available = manifest.records().iter().filter(|r| r.label == l).count() as u64;
            (l, donors, originals.map_or(available, |o| o[l.index()]))
        })
        .collect()
}

/// Originals sampled per class without replacement, in manifest order.
pub fn sample_originals(plan: &OfflinePlan, manifest: &Manifest, seed: u64) -> Result<Vec<ImageRecord>> {
    let mut keep = Vec::new();
    for row in &plan.rows {
        let members: Vec<&ImageRecord> = manifest.records().iter().filter(|r| r.label == row.label).collect();
        let want = row.originals_sampled as usize;
        if want > members.len() {
            return Err(Error::data(
                format!("class {}", row.label),
                format!("plan samples {want} originals, manifest has {}", members.len()),
            ));
        }
        let mut rng = rng_for(seed, &[ORIGINALS_KEY, row.label.index() as u64]);
        keep.extend(choose_indices(&mut rng, members.len(), want).into_iter().map(|i| members[i].id.clone()));
    }
    let keep: std::collections::BTreeSet<String> = keep.into_iter().collect();
    Ok(manifest.records().iter().filter(|r| keep.contains(&r.id)).cloned().collect())
}

pub struct OfflineOutput {
    pub plan: OfflinePlan,
    pub blueprints: Vec<HybridBlueprint>,
    pub manifest: Manifest,
}

/// Plans, renders and writes the offline dataset under `out`:
/// `plan.tsv`, `hybrids/<id>.png` with provenance sidecars, and
/// `offline.jsonl` listing hybrids followed by the sampled originals.
pub fn synth_offline(
    pool: &TemplatePool,
    manifest: &Manifest,
    manifest_root: &Path,
    fraction: f64,
    originals: Option<&[u64; 6]>,
    seed: u64,
    out: &Path,
) -> Result<OfflineOutput> {
    let plan = plan_offline(&plan_inputs(pool, manifest, originals), fraction).map_err(|e| Error::data("plan", e))?;
    let blueprints =
        offline_blueprints(&plan, &pool.donors, &pool.acceptors, seed).map_err(|e| Error::data("template pool", e))?;
    write_text(&out.join("plan.tsv"), &plan.to_string())?;
    blueprints.par_iter().try_for_each(|bp| -> Result<()> {
        let h = bp.render(&pool.donors, &pool.acceptors);
        write_gray(&out.join(format!("hybrids/{}.png", bp.id)), &h.image)?;
        write_json(&out.join(format!("hybrids/{}.json", bp.id)), &h.provenance())
    })?;
    let root = std::fs::canonicalize(manifest_root).map_err(|e| Error::io(manifest_root, e))?;
    let mut records: Vec<ImageRecord> = blueprints
        .iter()
        .map(|bp| ImageRecord {
            id: bp.id.clone(),
            path: format!("hybrids/{}.png", bp.id),
            label: bp.label,
            patient_id: pool.donors[bp.donor_index].source_id.clone(),
            frame_index: 0,
            mask_path: None,
        })
        .collect();
    for mut r in sample_originals(&plan, manifest, seed)? {
        r.path = resolve(&root, &r.path).to_string_lossy().into_owned();
        r.mask_path = r.mask_path.map(|m| resolve(&root, &m).to_string_lossy().into_owned());
        records.push(r);
    }
    let manifest = Manifest::new(records, "offline").map_err(|e| Error::data("offline manifest", e))?;
    write_manifest(&out.join("offline.jsonl"), &manifest)?;
    Ok(OfflineOutput {
        plan,
        blueprints,
        manifest,
    })
}

//! Per-record QC over a manifest on disk.

use std::path::Path;

use hybridaug_core::sampler::TemplatePool;
use hybridaug_core::synthesis::{self, EligibilityReport, QcConfig, Rejection};
use hybridaug_core::{CircleFit, ClassLabel, ImageRecord, Manifest};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::io::{read_gray, read_mask, resolve};

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Eligible(CircleFit),
    Rejected(Rejection),
    NoMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: String,
    pub label: ClassLabel,
    pub outcome: Outcome,
}

impl Verdict {
    pub fn eligible(&self) -> bool {
        matches!(self.outcome, Outcome::Eligible(_))
    }

    pub fn reason(&self) -> Option<String> {
        match &self.outcome {
            Outcome::Eligible(_) => None,
            Outcome::Rejected(r) => Some(r.to_string()),
            Outcome::NoMask => Some("no mask".to_string()),
        }
    }
}

/// Line of `rejections.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct RejectionLine {
    pub id: String,
    pub label: ClassLabel,
    pub reason: String,
}

pub fn rejection_lines(verdicts: &[Verdict]) -> Vec<RejectionLine> {
    verdicts
        .iter()
        .filter_map(|v| {
            v.reason().map(|reason| RejectionLine {
                id: v.id.clone(),
                label: v.label,
                reason,
            })
        })
        .collect()
}

pub fn report(verdicts: &[Verdict]) -> EligibilityReport {
    EligibilityReport::from_verdicts(verdicts.iter().map(|v| (v.label, v.eligible())))
}

fn verdict(r: &ImageRecord, outcome: Outcome) -> Verdict {
    Verdict {
        id: r.id.clone(),
        label: r.label,
        outcome,
    }
}

fn check(r: &ImageRecord, root: &Path, qc: &QcConfig) -> Result<Verdict> {
    let Some(mask_path) = &r.mask_path else {
        return Ok(verdict(r, Outcome::NoMask));
    };
    let image = read_gray(&resolve(root, &r.path))?;
    let mask = read_mask(&resolve(root, mask_path))?;
    let outcome = match synthesis::qualify(&image, &mask, qc) {
        Ok(c) => Outcome::Eligible(c),
        Err(e) => Outcome::Rejected(e),
    };
    Ok(verdict(r, outcome))
}

/// QC verdict for every record, in manifest order.
pub fn audit(manifest: &Manifest, root: &Path, qc: &QcConfig) -> Result<Vec<Verdict>> {
    manifest.records().par_iter().map(|r| check(r, root, qc)).collect()
}

/// QC plus template extraction for every eligible record.
pub fn extract(manifest: &Manifest, root: &Path, qc: &QcConfig) -> Result<(Vec<Verdict>, TemplatePool)> {
    let results: Vec<_> = manifest
        .records()
        .par_iter()
        .map(|r| -> Result<_> {
            let Some(mask_path) = &r.mask_path else {
                return Ok((verdict(r, Outcome::NoMask), None));
            };
            let image = read_gray(&resolve(root, &r.path))?;
            let mask = read_mask(&resolve(root, mask_path))?;
            Ok(match synthesis::extract_templates(&r.id, r.label, &image, &mask, qc) {
                Ok((d, a)) => (verdict(r, Outcome::Eligible(d.circle)), Some((d, a))),
                Err(e) => (verdict(r, Outcome::Rejected(e)), None),
            })
        })
        .collect::<Result<_>>()?;
    let mut verdicts = Vec::with_capacity(results.len());
    let mut donors = Vec::new();
    let mut acceptors = Vec::new();
    for (v, t) in results {
        verdicts.push(v);
        if let Some((d, a)) = t {
            donors.push(d);
            acceptors.push(a);
        }
    }
    Ok((verdicts, TemplatePool::new(donors, acceptors)))
}

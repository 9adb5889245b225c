//! Labeled image inventory: class labels, manifests, class accounting and the
//! two subsampling procedures (balanced per-class and per-patient).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{choose_indices, hash_str, rng_for};

/// The six view classes. Declaration order is the canonical class order used
/// for label bytes on the wire and for every per-class table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "3VT")]
    ThreeVesselTrachea,
    #[serde(rename = "3VV")]
    ThreeVesselView,
    #[serde(rename = "A4C")]
    AxialFourChamber,
    #[serde(rename = "LVOT")]
    LeftVentricularOutflow,
    #[serde(rename = "ABDO")]
    Abdomen,
    #[serde(rename = "NT")]
    NonTarget,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 6] = [
        ClassLabel::ThreeVesselTrachea,
        ClassLabel::ThreeVesselView,
        ClassLabel::AxialFourChamber,
        ClassLabel::LeftVentricularOutflow,
        ClassLabel::Abdomen,
        ClassLabel::NonTarget,
    ];

    pub const TARGETS: [ClassLabel; 5] = [
        ClassLabel::ThreeVesselTrachea,
        ClassLabel::ThreeVesselView,
        ClassLabel::AxialFourChamber,
        ClassLabel::LeftVentricularOutflow,
        ClassLabel::Abdomen,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    pub const fn is_target(self) -> bool {
        !matches!(self, ClassLabel::NonTarget)
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            ClassLabel::ThreeVesselTrachea => "3VT",
            ClassLabel::ThreeVesselView => "3VV",
            ClassLabel::AxialFourChamber => "A4C",
            ClassLabel::LeftVentricularOutflow => "LVOT",
            ClassLabel::Abdomen => "ABDO",
            ClassLabel::NonTarget => "NT",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for ClassLabel {
    type Err = UnknownLabel;

    /// Case-insensitive, so both "ABDO" and "Abdo" parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub label: ClassLabel,
    pub patient_id: String,
    pub frame_index: u64,
    pub mask_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {0:?} has an empty path")]
    EmptyPath(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("class {label} has {available} records, {requested} requested")]
    InsufficientClass {
        label: ClassLabel,
        available: usize,
        requested: usize,
    },
}

/// Validated, ordered list of records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    records: Vec<ImageRecord>,
    pub split_tag: String,
}

// Wire shape of one manifest line; the label stays a string so an unknown
// label can be reported as such instead of as a generic parse failure.
#[derive(Deserialize)]
struct RawRecord {
    id: String,
    path: String,
    label: String,
    patient_id: String,
    frame_index: u64,
    #[serde(default)]
    mask_path: Option<String>,
}

impl Manifest {
    pub fn new(records: Vec<ImageRecord>, split_tag: impl Into<String>) -> Result<Self, ManifestError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.path.is_empty() {
                return Err(ManifestError::EmptyPath(r.id.clone()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(ManifestError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            records,
            split_tag: split_tag.into(),
        })
    }

    /// Parses JSON Lines, one record per non-blank line. Line numbers in
    /// errors are 1-based.
    pub fn from_jsonl(text: &str, split_tag: impl Into<String>) -> Result<Self, ManifestError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| ManifestError::Parse {
                line: line_no,
                message: format!("{e}"),
            })?;
            let label = raw
                .label
                .parse()
                .map_err(|_| ManifestError::UnknownLabel {
                    line: line_no,
                    label: raw.label.clone(),
                })?;
            records.push(ImageRecord {
                id: raw.id,
                path: raw.path,
                label,
                patient_id: raw.patient_id,
                frame_index: raw.frame_index,
                mask_path: raw.mask_path,
            });
        }
        Self::new(records, split_tag)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            // ImageRecord serialization cannot fail: all fields are plain data.
            out.push_str(&serde_json::to_string(r).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    fn filtered(&self, keep: impl Fn(usize) -> bool) -> Manifest {
        Manifest {
            records: self
                .records
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, r)| r.clone())
                .collect(),
            split_tag: self.split_tag.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassShare {
    pub count: usize,
    pub fraction: f64,
}

/// Per-class record counts and their share of the total. Every class is
/// present; an empty manifest yields zero counts and zero fractions.
pub fn class_histogram(m: &Manifest) -> BTreeMap<ClassLabel, ClassShare> {
    let counts = ClassLabel::ALL.map(|l| m.records.iter().filter(|r| r.label == l).count());
    histogram_from_counts(&counts)
}

/// Histogram for counts given in canonical class order.
pub fn histogram_from_counts(counts: &[usize; 6]) -> BTreeMap<ClassLabel, ClassShare> {
    let total: usize = counts.iter().sum();
    ClassLabel::ALL
        .into_iter()
        .zip(counts)
        .map(|(l, &count)| {
            let fraction = if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            };
            (l, ClassShare { count, fraction })
        })
        .collect()
}

/// Draws exactly `per_target` records of every target class and `nt_count`
/// non-target records, without replacement. Output keeps manifest order.
pub fn balanced_subsample(
    m: &Manifest,
    per_target: usize,
    nt_count: usize,
    seed: u64,
) -> Result<Manifest, SampleError> {
    let mut keep = BTreeSet::new();
    for label in ClassLabel::ALL {
        let requested = if label.is_target() { per_target } else { nt_count };
        let members: Vec<usize> = m
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.len() < requested {
            return Err(SampleError::InsufficientClass {
                label,
                available: members.len(),
                requested,
            });
        }
        let mut rng = rng_for(seed, &[label.index() as u64]);
        keep.extend(
            choose_indices(&mut rng, members.len(), requested)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    Ok(m.filtered(|i| keep.contains(&i)))
}

/// Keeps at most `frames_per_target` records per (patient, target class)
/// and `frames_per_nt` per (patient, NT). Groups that are already small
/// enough are kept whole. Output keeps manifest order.
pub fn per_patient_sample(m: &Manifest, frames_per_target: usize, frames_per_nt: usize, seed: u64) -> Manifest {
    let mut groups: BTreeMap<(&str, ClassLabel), Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        groups.entry((r.patient_id.as_str(), r.label)).or_default().push(i);
    }
    let mut keep = BTreeSet::new();
    for ((patient, label), members) in groups {
        let limit = if label.is_target() {
            frames_per_target
        } else {
            frames_per_nt
        };
        let mut rng = rng_for(seed, &[hash_str(patient), label.index() as u64]);
        keep.extend(
            choose_indices(&mut rng, members.len(), limit)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    m.filtered(|i| keep.contains(&i))
}

//! Offline hybrid-dataset planning and online per-epoch batch schedules.
//!
//! The offline plan decides how often each donor is reused so that hybrids
//! make up a target fraction of every class. The online strategies decide,
//! per record and epoch, whether the record is shown unchanged, as a hybrid
//! or with traditional augmentation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, Manifest};
use crate::image::{GrayImage, ImageError};
use crate::math;
use crate::rng::rng_for;
use crate::synthesis::{self, AcceptorTemplate, DonorTemplate, HybridProvenance};
use crate::tradaug::{self, AugRecord, TradAugConfig};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_TRAINING_SIZE: usize = 80;

// Guards the ceiling against 0.9/0.1 landing a hair above an integer.
const CEIL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub label: ClassLabel,
    pub donors: u64,
    pub originals_sampled: u64,
    pub multiplicity: u64,
    pub hybrids: u64,
    pub total: u64,
    pub hybrid_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflinePlan {
    pub rows: Vec<PlanRow>,
    pub target_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("hybrid fraction must lie in [0, 1), got {0}")]
    Fraction(f64),
    #[error("class {0} needs at least one donor")]
    NoDonors(ClassLabel),
}

/// Computes donor multiplicities so each class reaches `hybrid_fraction`:
/// `multiplicity = ceil(originals * f / (1 - f) / donors)`.
pub fn plan_offline(per_class: &[(ClassLabel, u64, u64)], hybrid_fraction: f64) -> Result<OfflinePlan, PlanError> {
    if !(0.0..1.0).contains(&hybrid_fraction) {
        return Err(PlanError::Fraction(hybrid_fraction));
    }
    let rows = per_class
        .iter()
        .map(|&(label, donors, originals_sampled)| {
            if donors == 0 {
                return Err(PlanError::NoDonors(label));
            }
            let needed = originals_sampled as f64 * hybrid_fraction / (1.0 - hybrid_fraction);
            let multiplicity = math::ceil(needed / donors as f64 - CEIL_EPS).max(0.0) as u64;
            let hybrids = multiplicity * donors;
            let total = hybrids + originals_sampled;
            Ok(PlanRow {
                label,
                donors,
                originals_sampled,
                multiplicity,
                hybrids,
                total,
                hybrid_fraction: fraction_pct(hybrids, total),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OfflinePlan {
        rows,
        target_fraction: hybrid_fraction,
    })
}

fn fraction_pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl OfflinePlan {
    pub fn donors(&self) -> u64 {
        self.rows.iter().map(|r| r.donors).sum()
    }

    pub fn hybrids(&self) -> u64 {
        self.rows.iter().map(|r| r.hybrids).sum()
    }

    pub fn originals(&self) -> u64 {
        self.rows.iter().map(|r| r.originals_sampled).sum()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.total).sum()
    }

    /// Overall hybrid share of the planned dataset, in percent.
    pub fn hybrid_fraction(&self) -> f64 {
        fraction_pct(self.hybrids(), self.total())
    }

    pub fn row(&self, label: ClassLabel) -> Option<&PlanRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for OfflinePlan {
    /// Tab-separated table; the TOTAL row has no multiplicity.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "view\tdonors\tmultiplicity\thybrids\toriginals_sampled\ttotal\thybrid_pct"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.1}",
                r.label, r.donors, r.multiplicity, r.hybrids, r.originals_sampled, r.total, r.hybrid_fraction
            )?;
        }
        writeln!(
            f,
            "TOTAL\t{}\tN/A\t{}\t{}\t{}\t{:.1}",
            self.donors(),
            self.hybrids(),
            self.originals(),
            self.total(),
            self.hybrid_fraction()
        )
    }
}

/// One hybrid to be produced by offline materialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridBlueprint {
    pub id: String,
    pub label: ClassLabel,
    pub donor_index: usize,
    pub acceptor_index: usize,
    pub rotation_deg: f64,
}

impl HybridBlueprint {
    pub fn render(&self, donors: &[DonorTemplate], acceptors: &[AcceptorTemplate]) -> synthesis::HybridImage {
        synthesis::synthesize(&donors[self.donor_index], &acceptors[self.acceptor_index], self.rotation_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolMismatch {
    #[error("plan expects {planned} {label} donors, pool has {available}")]
    Donors {
        label: ClassLabel,
        planned: u64,
        available: u64,
    },
    #[error("acceptor pool is empty")]
    NoAcceptors,
}

/// Expands a plan into hybrid blueprints: each donor is used exactly
/// `multiplicity` times with freshly drawn acceptors and rotations. The draw
/// for use `k` of donor `d` depends only on `(seed, d, k)`.
pub fn offline_blueprints(
    plan: &OfflinePlan,
    donors: &[DonorTemplate],
    acceptors: &[AcceptorTemplate],
    seed: u64,
) -> Result<Vec<HybridBlueprint>, PoolMismatch> {
    for row in &plan.rows {
        let available = donors.iter().filter(|d| d.label == row.label).count() as u64;
        if available != row.donors {
            return Err(PoolMismatch::Donors {
                label: row.label,
                planned: row.donors,
                available,
            });
        }
    }
    let any_hybrids = plan.rows.iter().any(|r| r.multiplicity > 0);
    if any_hybrids && acceptors.is_empty() {
        return Err(PoolMismatch::NoAcceptors);
    }
    let mut out = Vec::new();
    for row in &plan.rows {
        for (d, donor) in donors.iter().enumerate().filter(|(_, d)| d.label == row.label) {
            for k in 0..row.multiplicity {
                let mut rng = rng_for(seed, &[d as u64, k]);
                let acceptor_index = rng.gen_range(0..acceptors.len());
                let rotation_deg = synthesis::draw_rotation(&mut rng);
                out.push(HybridBlueprint {
                    id: format!("hyb_{}_{:03}", donor.source_id, k),
                    label: donor.label,
                    donor_index: d,
                    acceptor_index,
                    rotation_deg,
                });
            }
        }
    }
    Ok(out)
}

/// Online sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Every record once, unchanged.
    #[serde(rename = "none")]
    NoAug,
    /// Like `CutPasteBalanced` with traditional augmentation in place of hybrids.
    TraditionalBalanced,
    /// Every eligible record as a hybrid, everything else unchanged.
    CutPasteNaive,
    /// Eligible target records as hybrid and unchanged, eligible NT records
    /// as hybrid only, ineligible records unchanged.
    CutPasteBalanced,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NoAug,
        Strategy::TraditionalBalanced,
        Strategy::CutPasteNaive,
        Strategy::CutPasteBalanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::NoAug => "none",
            Strategy::TraditionalBalanced => "traditional-balanced",
            Strategy::CutPasteNaive => "cut-paste-naive",
            Strategy::CutPasteBalanced => "cut-paste-balanced",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Unchanged,
    Hybrid,
    Traditional,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BatchEntry {
    pub record_id: String,
    pub form: Form,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub epoch: u32,
    pub batch_index: u32,
    pub entries: Vec<BatchEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub epoch: u32,
    pub batches: Vec<Batch>,
}

impl EpochSchedule {
    pub fn entries(&self) -> impl Iterator<Item = &BatchEntry> {
        self.batches.iter().flat_map(|b| b.entries.iter())
    }

    pub fn entry_count(&self) -> usize {
        self.batches.iter().map(|b| b.entries.len()).sum()
    }

    /// One JSON object per batch, newline terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for b in &self.batches {
            out.push_str(&serde_json::to_string(b).unwrap_or_default());
            out.push('\n');
        }
        out
    }
}

/// Cut-paste eligibility per record id.
pub type Eligibility = BTreeMap<String, bool>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("no eligibility flag for record {0:?}")]
    MissingEligibility(String),
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
}

/// The unshuffled entry multiset a strategy produces for `manifest`.
pub fn strategy_entries(
    manifest: &Manifest,
    eligibility: &Eligibility,
    strategy: Strategy,
) -> Result<Vec<BatchEntry>, ScheduleError> {
    let augmented = match strategy {
        Strategy::TraditionalBalanced => Form::Traditional,
        _ => Form::Hybrid,
    };
    let mut out = Vec::with_capacity(manifest.len() * 2);
    for r in manifest.records() {
        let eligible = *eligibility
            .get(&r.id)
            .ok_or_else(|| ScheduleError::MissingEligibility(r.id.clone()))?;
        let entry = |form| BatchEntry {
            record_id: r.id.clone(),
            form,
        };
        match strategy {
            Strategy::NoAug => out.push(entry(Form::Unchanged)),
            Strategy::CutPasteNaive => out.push(entry(if eligible { Form::Hybrid } else { Form::Unchanged })),
            Strategy::CutPasteBalanced | Strategy::TraditionalBalanced => {
                if !eligible {
                    out.push(entry(Form::Unchanged));
                } else if r.label.is_target() {
                    out.push(entry(augmented));
                    out.push(entry(Form::Unchanged));
                } else {
                    out.push(entry(augmented));
                }
            }
        }
    }
    Ok(out)
}

/// Shuffles the strategy's entries with a generator keyed by `(seed, epoch)`
/// and chunks them into batches; the last batch may be short.
pub fn build_epoch_schedule(
    manifest: &Manifest,
    eligibility: &Eligibility,
    strategy: Strategy,
    seed: u64,
    epoch: u32,
    batch_size: usize,
) -> Result<EpochSchedule, ScheduleError> {
    if batch_size == 0 {
        return Err(ScheduleError::ZeroBatchSize);
    }
    let mut entries = strategy_entries(manifest, eligibility, strategy)?;
    let mut rng = rng_for(seed, &[0x5C4E_D01E, u64::from(epoch)]);
    entries.shuffle(&mut rng);
    let batches = entries
        .chunks(batch_size)
        .enumerate()
        .map(|(i, chunk)| Batch {
            epoch,
            batch_index: i as u32,
            entries: chunk.to_vec(),
        })
        .collect();
    Ok(EpochSchedule { epoch, batches })
}

/// Resolves decoded originals by record id.
pub trait ImageSource {
    type Error: fmt::Display;

    fn image(&self, record_id: &str) -> Result<GrayImage, Self::Error>;
}

impl ImageSource for BTreeMap<String, GrayImage> {
    type Error = String;

    fn image(&self, record_id: &str) -> Result<GrayImage, String> {
        self.get(record_id)
            .cloned()
            .ok_or_else(|| format!("no image for record {record_id:?}"))
    }
}

/// Donors indexed by source record, plus the acceptor pool.
#[derive(Debug, Clone, Default)]
pub struct TemplatePool {
    pub donors: Vec<DonorTemplate>,
    pub acceptors: Vec<AcceptorTemplate>,
    by_source: BTreeMap<String, usize>,
}

impl TemplatePool {
    /// Both pools are ordered by source id, so the pool is the same whether
    /// built in memory or loaded from a template store.
    pub fn new(mut donors: Vec<DonorTemplate>, mut acceptors: Vec<AcceptorTemplate>) -> Self {
        donors.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        acceptors.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        let by_source = donors
            .iter()
            .enumerate()
            .map(|(i, d)| (d.source_id.clone(), i))
            .collect();
        Self {
            donors,
            acceptors,
            by_source,
        }
    }

    pub fn donor(&self, source_id: &str) -> Option<&DonorTemplate> {
        self.by_source.get(source_id).map(|&i| &self.donors[i])
    }

    /// Eligibility flags implied by the pool: a record is eligible iff it
    /// contributed a donor.
    pub fn eligibility(&self, manifest: &Manifest) -> Eligibility {
        manifest
            .records()
            .iter()
            .map(|r| (r.id.clone(), self.by_source.contains_key(&r.id)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RealizeConfig {
    pub seed: u64,
    pub output_width: usize,
    pub output_height: usize,
    pub tradaug: TradAugConfig,
}

impl Default for RealizeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_width: DEFAULT_TRAINING_SIZE,
            output_height: DEFAULT_TRAINING_SIZE,
            tradaug: TradAugConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedItem {
    pub image: GrayImage,
    pub label: ClassLabel,
    pub form: Form,
    pub hybrid: Option<HybridProvenance>,
    pub augmentation: Option<AugRecord>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RealizeError {
    #[error("entry {position} ({record_id}): record not in manifest")]
    UnknownRecord { position: usize, record_id: String },
    #[error("entry {position} ({record_id}): no donor template for hybrid entry")]
    NotInDonorPool { position: usize, record_id: String },
    #[error("entry {position} ({record_id}): acceptor pool is empty")]
    NoAcceptors { position: usize, record_id: String },
    #[error("entry {position} ({record_id}): {message}")]
    Source {
        position: usize,
        record_id: String,
        message: String,
    },
    #[error("entry {position} ({record_id}): {source}")]
    Image {
        position: usize,
        record_id: String,
        source: ImageError,
    },
}

/// Generator for slot `position` of batch `batch_index` in `epoch`.
pub fn entry_rng(seed: u64, epoch: u32, batch_index: u32, position: usize) -> crate::rng::Rng {
    rng_for(seed, &[u64::from(epoch), u64::from(batch_index), position as u64])
}

/// Turns one batch into training images at the configured resolution.
pub fn realize_batch<S: ImageSource>(
    batch: &Batch,
    manifest: &Manifest,
    pool: &TemplatePool,
    images: &S,
    cfg: &RealizeConfig,
) -> Result<Vec<RealizedItem>, RealizeError> {
    batch
        .entries
        .iter()
        .enumerate()
        .map(|(position, entry)| realize_entry(batch.epoch, batch.batch_index, position, entry, manifest, pool, images, cfg))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn realize_entry<S: ImageSource>(
    epoch: u32,
    batch_index: u32,
    position: usize,
    entry: &BatchEntry,
    manifest: &Manifest,
    pool: &TemplatePool,
    images: &S,
    cfg: &RealizeConfig,
) -> Result<RealizedItem, RealizeError> {
    let record_id = || entry.record_id.to_string();
    let record = manifest.get(&entry.record_id).ok_or_else(|| RealizeError::UnknownRecord {
        position,
        record_id: record_id(),
    })?;
    let mut rng = entry_rng(cfg.seed, epoch, batch_index, position);
    let load = || {
        images.image(&entry.record_id).map_err(|e| RealizeError::Source {
            position,
            record_id: record_id(),
            message: format!("{e}"),
        })
    };
    let (native, hybrid, augmentation) = match entry.form {
        Form::Unchanged => (load()?, None, None),
        Form::Traditional => {
            let (img, rec) = tradaug::apply_traditional(&load()?, &cfg.tradaug, &mut rng);
            (img, None, Some(rec))
        }
        Form::Hybrid => {
            let donor = pool.donor(&entry.record_id).ok_or_else(|| RealizeError::NotInDonorPool {
                position,
                record_id: record_id(),
            })?;
            let h = synthesis::hybrid_for_donor(donor, &pool.acceptors, &mut rng).map_err(|_| {
                RealizeError::NoAcceptors {
                    position,
                    record_id: record_id(),
                }
            })?;
            let prov = h.provenance();
            (h.image, Some(prov), None)
        }
    };
    let image = native
        .resize_bilinear(cfg.output_width, cfg.output_height)
        .map_err(|source| RealizeError::Image {
            position,
            record_id: record_id(),
            source,
        })?;
    Ok(RealizedItem {
        image,
        // Hybrids are labeled by their donor, which is this record.
        label: record.label,
        form: entry.form,
        hybrid,
        augmentation,
    })
}

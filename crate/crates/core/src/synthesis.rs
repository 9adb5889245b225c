//! Donor/acceptor extraction, hybrid synthesis and eligibility accounting.
//!
//! An image is cut-paste eligible when its thorax mask survives cleanup and
//! quality control. The cleaned region is replaced by its equivalent-area
//! circle; the disk interior becomes the donor and the rest of the frame,
//! with the disk zeroed, becomes the acceptor. A hybrid pastes a donor,
//! scaled to the cavity radius and rotated, into an acceptor's cavity and
//! carries the donor's label.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::geometry::{self, BinaryMask, CircleFit, GeometryError};
use crate::image::GrayImage;
use crate::math;

pub const MIN_ROTATION_DEG: f64 = 10.0;
pub const MAX_ROTATION_DEG: f64 = 350.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    pub max_eccentricity: f64,
    pub min_area: usize,
    pub require_circle_in_bounds: bool,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            max_eccentricity: 0.75,
            min_area: 64,
            require_circle_in_bounds: true,
        }
    }
}

impl QcConfig {
    pub fn validate(&self) -> Result<(), InvalidQc> {
        if self.max_eccentricity > 0.0 && self.max_eccentricity < 1.0 {
            Ok(())
        } else {
            Err(InvalidQc(self.max_eccentricity))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("max_eccentricity must lie in (0, 1), got {0}")]
pub struct InvalidQc(pub f64);

/// Why an image is not cut-paste eligible.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum Rejection {
    #[error("empty mask")]
    EmptyMask,
    #[error("degenerate mask")]
    DegenerateMask,
    #[error("eccentricity {0:.3} above threshold")]
    Eccentric(f64),
    #[error("fitted circle leaves the image")]
    CircleOutOfBounds,
    #[error("mask is {mask_width}x{mask_height} but image is {image_width}x{image_height}")]
    DimensionMismatch {
        image_width: usize,
        image_height: usize,
        mask_width: usize,
        mask_height: usize,
    },
}

impl From<GeometryError> for Rejection {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::EmptyMask => Rejection::EmptyMask,
            GeometryError::DegenerateMask => Rejection::DegenerateMask,
        }
    }
}

/// Circular thorax patch. `patch` is the bounding square of the circle with
/// everything outside the disk set to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DonorTemplate {
    pub source_id: String,
    pub label: ClassLabel,
    pub patch: GrayImage,
    pub circle: CircleFit,
}

/// Source frame with the thorax disk zeroed out.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptorTemplate {
    pub source_id: String,
    pub source_label: ClassLabel,
    pub background: GrayImage,
    pub cavity: CircleFit,
}

/// Sidecar metadata stored next to a template image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMeta {
    pub source_id: String,
    pub label: ClassLabel,
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl DonorTemplate {
    pub fn meta(&self) -> TemplateMeta {
        TemplateMeta {
            source_id: self.source_id.clone(),
            label: self.label,
            cx: self.circle.cx,
            cy: self.circle.cy,
            r: self.circle.r,
        }
    }

    pub fn from_meta(meta: TemplateMeta, patch: GrayImage) -> Self {
        Self {
            source_id: meta.source_id,
            label: meta.label,
            patch,
            circle: CircleFit {
                cx: meta.cx,
                cy: meta.cy,
                r: meta.r,
            },
        }
    }
}

impl AcceptorTemplate {
    pub fn meta(&self) -> TemplateMeta {
        TemplateMeta {
            source_id: self.source_id.clone(),
            label: self.source_label,
            cx: self.cavity.cx,
            cy: self.cavity.cy,
            r: self.cavity.r,
        }
    }

    pub fn from_meta(meta: TemplateMeta, background: GrayImage) -> Self {
        Self {
            source_id: meta.source_id,
            source_label: meta.label,
            background,
            cavity: CircleFit {
                cx: meta.cx,
                cy: meta.cy,
                r: meta.r,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridProvenance {
    pub donor_id: String,
    pub acceptor_id: String,
    pub rotation_deg: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridImage {
    pub image: GrayImage,
    pub label: ClassLabel,
    pub donor_id: String,
    pub acceptor_id: String,
    pub rotation_deg: f64,
    pub scale: f64,
}

impl HybridImage {
    pub fn provenance(&self) -> HybridProvenance {
        HybridProvenance {
            donor_id: self.donor_id.clone(),
            acceptor_id: self.acceptor_id.clone(),
            rotation_deg: self.rotation_deg,
            scale: self.scale,
        }
    }
}

/// Cleans `mask` (fill holes, then keep the largest component), applies QC
/// and cuts `image` into a donor and an acceptor.
pub fn extract_templates(
    source_id: &str,
    label: ClassLabel,
    image: &GrayImage,
    mask: &BinaryMask,
    qc: &QcConfig,
) -> Result<(DonorTemplate, AcceptorTemplate), Rejection> {
    let circle = qualify(image, mask, qc)?;
    Ok(cut(source_id, label, image, circle))
}

/// The QC half of [`extract_templates`]: returns the fitted circle of an
/// eligible image.
pub fn qualify(image: &GrayImage, mask: &BinaryMask, qc: &QcConfig) -> Result<CircleFit, Rejection> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Rejection::DimensionMismatch {
            image_width: image.width(),
            image_height: image.height(),
            mask_width: mask.width(),
            mask_height: mask.height(),
        });
    }
    let cleaned = geometry::largest_component(&geometry::fill_holes(mask))?;
    if cleaned.area() < qc.min_area {
        return Err(Rejection::DegenerateMask);
    }
    let analysis = geometry::analyze(&cleaned)?;
    if analysis.stats.eccentricity > qc.max_eccentricity {
        return Err(Rejection::Eccentric(analysis.stats.eccentricity));
    }
    if qc.require_circle_in_bounds && !analysis.circle.inside(image.width(), image.height()) {
        return Err(Rejection::CircleOutOfBounds);
    }
    Ok(analysis.circle)
}

fn cut(source_id: &str, label: ClassLabel, image: &GrayImage, circle: CircleFit) -> (DonorTemplate, AcceptorTemplate) {
    let x0 = math::floor(circle.cx - circle.r) as i64;
    let y0 = math::floor(circle.cy - circle.r) as i64;
    let side = math::ceil(2.0 * circle.r) as usize + 2;
    let patch_circle = CircleFit {
        cx: circle.cx - x0 as f64,
        cy: circle.cy - y0 as f64,
        r: circle.r,
    };
    // side >= 3, so the constructor cannot fail.
    let mut patch = GrayImage::new(side, side).expect("non-empty patch");
    for py in 0..side {
        for px in 0..side {
            let (sx, sy) = (x0 + px as i64, y0 + py as i64);
            if patch_circle.contains(px as f64, py as f64) {
                patch.set(px, py, image.get_or_zero(sx, sy) as u8);
            }
        }
    }
    let disk = geometry::rasterize_circle(&circle, image.width(), image.height());
    let mut background = image.clone();
    for (x, y) in disk.points() {
        background.set(x, y, 0);
    }
    (
        DonorTemplate {
            source_id: source_id.to_string(),
            label,
            patch,
            circle: patch_circle,
        },
        AcceptorTemplate {
            source_id: source_id.to_string(),
            source_label: label,
            background,
            cavity: circle,
        },
    )
}

/// Pastes `donor` into `acceptor`'s cavity. The donor is scaled by
/// `cavity_r / donor_r` and rotated counterclockwise (as displayed, with y
/// pointing down) by `rotation_deg`, in a single bilinear inverse mapping.
/// Pixels outside the cavity disk are copied untouched.
pub fn synthesize(donor: &DonorTemplate, acceptor: &AcceptorTemplate, rotation_deg: f64) -> HybridImage {
    let cavity = acceptor.cavity;
    let scale = cavity.r / donor.circle.r;
    let theta = rotation_deg.to_radians();
    let (c, s) = (math::cos(theta), math::sin(theta));
    let mut image = acceptor.background.clone();
    let disk = geometry::rasterize_circle(&cavity, image.width(), image.height());
    for (x, y) in disk.points() {
        let vx = x as f64 - cavity.cx;
        let vy = y as f64 - cavity.cy;
        let ux = (c * vx - s * vy) / scale;
        let uy = (s * vx + c * vy) / scale;
        let v = donor
            .patch
            .sample_bilinear_zero(donor.circle.cx + ux, donor.circle.cy + uy);
        image.set(x, y, math::to_u8(v));
    }
    HybridImage {
        image,
        label: donor.label,
        donor_id: donor.source_id.clone(),
        acceptor_id: acceptor.source_id.clone(),
        rotation_deg,
        scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{0} pool is empty")]
pub struct EmptyPool(pub &'static str);

/// Draws a rotation uniformly from the hybrid range.
pub fn draw_rotation<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(MIN_ROTATION_DEG..=MAX_ROTATION_DEG)
}

/// Uniform donor, uniform acceptor (self-pairs allowed), uniform rotation.
pub fn random_hybrid<R: Rng + ?Sized>(
    donors: &[DonorTemplate],
    acceptors: &[AcceptorTemplate],
    rng: &mut R,
) -> Result<HybridImage, EmptyPool> {
    if donors.is_empty() {
        return Err(EmptyPool("donor"));
    }
    let donor = &donors[rng.gen_range(0..donors.len())];
    hybrid_for_donor(donor, acceptors, rng)
}

/// A hybrid with a fixed donor and a random acceptor and rotation.
pub fn hybrid_for_donor<R: Rng + ?Sized>(
    donor: &DonorTemplate,
    acceptors: &[AcceptorTemplate],
    rng: &mut R,
) -> Result<HybridImage, EmptyPool> {
    if acceptors.is_empty() {
        return Err(EmptyPool("acceptor"));
    }
    let acceptor = &acceptors[rng.gen_range(0..acceptors.len())];
    let rotation = draw_rotation(rng);
    Ok(synthesize(donor, acceptor, rotation))
}

/// Per-class counts of cut-paste eligible images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityRow {
    pub label: ClassLabel,
    pub total: u64,
    pub eligible: u64,
}

impl EligibilityRow {
    pub fn percent(&self) -> f64 {
        percent(self.eligible, self.total)
    }
}

fn percent(eligible: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * eligible as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityReport {
    pub rows: Vec<EligibilityRow>,
    pub total: u64,
    pub eligible: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("eligible count {eligible} exceeds total {total}")]
pub struct EligibleExceedsTotal {
    pub total: u64,
    pub eligible: u64,
}

impl EligibilityReport {
    /// Tallies `(label, eligible)` verdicts; every class gets a row.
    pub fn from_verdicts(verdicts: impl IntoIterator<Item = (ClassLabel, bool)>) -> Self {
        let mut counts = [(0u64, 0u64); 6];
        for (label, ok) in verdicts {
            counts[label.index()].0 += 1;
            counts[label.index()].1 += u64::from(ok);
        }
        let rows = ClassLabel::ALL
            .into_iter()
            .zip(counts)
            .map(|(label, (total, eligible))| EligibilityRow { label, total, eligible })
            .collect();
        Self::from_rows(rows).expect("tallies are consistent")
    }

    /// Builds a report from recorded per-class counts; the overall row is
    /// the column sum.
    pub fn from_rows(rows: Vec<EligibilityRow>) -> Result<Self, EligibleExceedsTotal> {
        for r in &rows {
            if r.eligible > r.total {
                return Err(EligibleExceedsTotal {
                    total: r.total,
                    eligible: r.eligible,
                });
            }
        }
        let total = rows.iter().map(|r| r.total).sum();
        let eligible = rows.iter().map(|r| r.eligible).sum();
        Ok(Self { rows, total, eligible })
    }

    /// Replaces the overall row with separately recorded totals, for
    /// published tables whose overall row is not the column sum.
    pub fn with_overall(mut self, total: u64, eligible: u64) -> Result<Self, EligibleExceedsTotal> {
        if eligible > total {
            return Err(EligibleExceedsTotal { total, eligible });
        }
        self.total = total;
        self.eligible = eligible;
        Ok(self)
    }

    pub fn percent(&self) -> f64 {
        percent(self.eligible, self.total)
    }

    pub fn row(&self, label: ClassLabel) -> Option<&EligibilityRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for EligibilityReport {
    /// Tab-separated table with percentages to two decimals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "view\ttotal\teligible\tpercent_eligible")?;
        for r in &self.rows {
            writeln!(f, "{}\t{}\t{}\t{:.2}", r.label, r.total, r.eligible, r.percent())?;
        }
        writeln!(f, "TOTAL\t{}\t{}\t{:.2}", self.total, self.eligible, self.percent())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("pair count for {0} eligible images overflows u64")]
pub struct PairCountOverflow(pub u64);

/// Ordered donor x acceptor pairs, self-pairs included.
pub fn unique_pair_count(eligible_total: u64) -> Result<u64, PairCountOverflow> {
    eligible_total
        .checked_mul(eligible_total)
        .ok_or(PairCountOverflow(eligible_total))
}

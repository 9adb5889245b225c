//! Synthetic ultrasound-like frames with known thorax geometry.
//!
//! Target classes draw a bright ring with `k + 2` dark interior blobs, where
//! `k` is the class index, on a ring whose radius also depends on the class.
//! Both cues are rotation invariant, so pasting a thorax into another frame
//! keeps its class recognisable. NT frames are thoraxless with probability
//! `nt_thoraxless_fraction`; otherwise they carry a single bright central
//! blob. A fraction of thoraces is drawn as an eccentric ellipse that QC
//! must reject.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, ImageRecord};
use crate::geometry::{rasterize_ellipse, BinaryMask, CircleFit};
use crate::image::{GrayImage, ImageError};
use crate::math;
use crate::rng::rng_for;
use crate::synthesis::QcConfig;

// Thorax circles keep this many pixels clear of the frame edge.
const MARGIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub image_size: usize,
    pub counts: BTreeMap<ClassLabel, usize>,
    pub nt_thoraxless_fraction: f64,
    pub eccentric_fraction: f64,
    pub eccentricity_when_eccentric: f64,
    pub noise_level: f64,
    pub frames_per_patient: usize,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            image_size: 160,
            counts: ClassLabel::ALL
                .into_iter()
                .map(|l| (l, if l.is_target() { 100 } else { 500 }))
                .collect(),
            nt_thoraxless_fraction: 0.59,
            eccentric_fraction: 0.05,
            eccentricity_when_eccentric: 0.9,
            noise_level: 8.0,
            frames_per_patient: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhantomError {
    #[error("{0} must lie in [0, 1]")]
    Fraction(&'static str),
    #[error("eccentricity_when_eccentric must lie in (0.75, 1), got {0}")]
    Eccentricity(f64),
    #[error("image_size must be at least 32, got {0}")]
    ImageSize(usize),
    #[error("noise_level must be non-negative")]
    Noise,
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl PhantomConfig {
    /// Counts for every target class plus an NT count.
    pub fn with_counts(per_target: usize, nt: usize) -> Self {
        Self {
            counts: ClassLabel::ALL
                .into_iter()
                .map(|l| (l, if l.is_target() { per_target } else { nt }))
                .collect(),
            ..Self::default()
        }
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        ClassLabel::ALL.iter().map(|&l| self.count(l)).sum()
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        if !(0.0..=1.0).contains(&self.nt_thoraxless_fraction) {
            return Err(PhantomError::Fraction("nt_thoraxless_fraction"));
        }
        if !(0.0..=1.0).contains(&self.eccentric_fraction) {
            return Err(PhantomError::Fraction("eccentric_fraction"));
        }
        let e = self.eccentricity_when_eccentric;
        if !(e > QcConfig::default().max_eccentricity && e < 1.0) {
            return Err(PhantomError::Eccentricity(e));
        }
        if self.image_size < 32 {
            return Err(PhantomError::ImageSize(self.image_size));
        }
        if self.noise_level.is_nan() || self.noise_level < 0.0 {
            return Err(PhantomError::Noise);
        }
        Ok(())
    }
}

/// Rotation-invariant description of a thorax interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub blobs: u8,
    /// Blob ring radius as a fraction of the thorax radius.
    pub ring: f64,
    pub phase_rad: f64,
}

/// Generator-side ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    /// Equivalent-area circle of the thorax, absent for thoraxless frames.
    pub circle: Option<(f64, f64, f64)>,
    pub thorax: bool,
    pub eccentric: bool,
    pub eligible: bool,
    pub signature: Option<ClassSignature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomRecord {
    pub record: ImageRecord,
    pub truth: PhantomTruth,
}

/// Sidecar line shape: `{"id", "cx", "cy", "r", "eligible", "label"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLine {
    pub id: String,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub r: Option<f64>,
    pub eligible: bool,
    pub label: ClassLabel,
}

impl PhantomRecord {
    pub fn ground_truth_line(&self) -> GroundTruthLine {
        let c = self.truth.circle;
        GroundTruthLine {
            id: self.record.id.clone(),
            cx: c.map(|c| c.0),
            cy: c.map(|c| c.1),
            r: c.map(|c| c.2),
            eligible: self.truth.eligible,
            label: self.record.label,
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * PI * u2)
}

fn paint_disk(canvas: &mut [f64], size: usize, cx: f64, cy: f64, r: f64, value: f64) {
    let y0 = math::floor(cy - r).max(0.0) as usize;
    let y1 = (math::ceil(cy + r) as usize).min(size - 1);
    let x0 = math::floor(cx - r).max(0.0) as usize;
    let x1 = (math::ceil(cx + r) as usize).min(size - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                canvas[y * size + x] = value;
            }
        }
    }
}

fn paint_streak(canvas: &mut [f64], size: usize, from: (f64, f64), to: (f64, f64), half_width: f64, value: f64) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len2 = dx * dx + dy * dy;
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 - from.0, y as f64 - from.1);
            let t = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
            let (ex, ey) = (px - t * dx, py - t * dy);
            if ex * ex + ey * ey <= half_width * half_width {
                canvas[y * size + x] = value;
            }
        }
    }
}

/// Draws one frame of class `label`. Deterministic in the generator state.
pub fn render_phantom<R: Rng + ?Sized>(
    label: ClassLabel,
    config: &PhantomConfig,
    rng: &mut R,
) -> Result<(GrayImage, BinaryMask, PhantomTruth), PhantomError> {
    config.validate()?;
    let size = config.image_size;
    let s = size as f64;
    let mut canvas = alloc::vec![0.0f64; size * size];
    let background = rng.gen_range(10.0..25.0);
    canvas.iter_mut().for_each(|v| *v = background);

    // Limb-like streaks, drawn first so the thorax covers them.
    let streaks = rng.gen_range(2..=4);
    for _ in 0..streaks {
        let from = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
        let angle = rng.gen_range(0.0..2.0 * PI);
        let len = rng.gen_range(0.25 * s..0.6 * s);
        let to = (from.0 + len * math::cos(angle), from.1 + len * math::sin(angle));
        let hw = rng.gen_range(2.0..4.5);
        let value = rng.gen_range(80.0..140.0);
        paint_streak(&mut canvas, size, from, to, hw, value);
    }

    let thoraxless = !label.is_target() && rng.gen_bool(config.nt_thoraxless_fraction);
    let eccentric = !thoraxless && rng.gen_bool(config.eccentric_fraction);
    let r = rng.gen_range(0.2 * s..0.28 * s);
    let lo = r + MARGIN;
    let cx = rng.gen_range(lo..s - 1.0 - lo);
    let cy = rng.gen_range(lo..s - 1.0 - lo);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let theta = rng.gen_range(0.0..PI);
    let tissue = rng.gen_range(70.0..90.0);
    let ring = rng.gen_range(180.0..215.0);

    let mut mask = BinaryMask::new(size, size);
    let mut truth = PhantomTruth {
        circle: None,
        thorax: !thoraxless,
        eccentric,
        eligible: false,
        signature: None,
    };

    if eccentric {
        let e = config.eccentricity_when_eccentric;
        let (a, b) = (r, r * math::sqrt(1.0 - e * e));
        mask = rasterize_ellipse(size, size, (cx, cy), (a, b), theta);
        let inner = rasterize_ellipse(size, size, (cx, cy), ((a - 3.0).max(1.0), (b - 3.0).max(1.0)), theta);
        for (x, y) in mask.points() {
            canvas[y * size + x] = if inner.get(x, y) { tissue } else { ring };
        }
        truth.circle = Some((cx, cy, math::sqrt(a * b)));
    } else if !thoraxless {
        paint_disk(&mut canvas, size, cx, cy, r, ring);
        paint_disk(&mut canvas, size, cx, cy, r - 3.0, tissue);
        let signature = if label.is_target() {
            let k = label.index();
            let blobs = k + 2;
            let ring_frac = 0.3 + 0.08 * k as f64;
            let blob_r = 0.13 * r;
            for j in 0..blobs {
                let a = phase + 2.0 * PI * j as f64 / blobs as f64;
                let bx = cx + ring_frac * r * math::cos(a);
                let by = cy + ring_frac * r * math::sin(a);
                paint_disk(&mut canvas, size, bx, by, blob_r, rng.gen_range(15.0..30.0));
            }
            ClassSignature {
                blobs: blobs as u8,
                ring: ring_frac,
                phase_rad: phase,
            }
        } else {
            paint_disk(&mut canvas, size, cx, cy, 0.25 * r, rng.gen_range(150.0..175.0));
            ClassSignature {
                blobs: 1,
                ring: 0.0,
                phase_rad: phase,
            }
        };
        truth.signature = Some(signature);
        let circle = CircleFit { cx, cy, r };
        mask = crate::geometry::rasterize_circle(&circle, size, size);
        truth.circle = Some((cx, cy, r));
        truth.eligible = circle.inside(size, size);
    }

    // Intensity-dependent speckle.
    let mut image = GrayImage::new(size, size)?;
    for (dst, &v) in image.pixels_mut().iter_mut().zip(&canvas) {
        let n = gaussian(rng) * config.noise_level * (0.5 + v / 255.0);
        *dst = math::to_u8(v + n);
    }
    Ok((image, mask, truth))
}

/// Record `index` of the corpus described by `config`: records are laid out
/// class by class in canonical order and each is rendered from a generator
/// keyed by `(seed, index)`.
pub fn render_record(
    config: &PhantomConfig,
    index: usize,
) -> Result<(PhantomRecord, GrayImage, BinaryMask), PhantomError> {
    let mut offset = 0;
    let mut slot = None;
    for label in ClassLabel::ALL {
        let n = config.count(label);
        if index < offset + n {
            slot = Some((label, index - offset));
            break;
        }
        offset += n;
    }
    let (label, k) = slot.ok_or(PhantomError::Fraction("index"))?;
    let mut rng = rng_for(config.seed, &[index as u64]);
    let (image, mask, truth) = render_phantom(label, config, &mut rng)?;
    let id = format!("{}_{:05}", label.as_str().to_ascii_lowercase(), k);
    let per_patient = config.frames_per_patient.max(1);
    let record = ImageRecord {
        path: format!("images/{id}.png"),
        mask_path: Some(format!("masks/{id}.png")),
        patient_id: format!("p{:04}", k / per_patient),
        frame_index: (k % per_patient) as u64,
        label,
        id,
    };
    Ok((PhantomRecord { record, truth }, image, mask))
}

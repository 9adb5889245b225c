//! Traditional online augmentation baseline: Gaussian blur and percentile
//! intensity rescaling (each gated by a coin flip), followed by a random
//! affine with rotation, shift, zoom and flips.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradAugConfig {
    pub blur_prob: f64,
    pub blur_sigma_range: [f64; 2],
    pub rescale_prob: f64,
    pub rescale_percentiles: [f64; 2],
    pub max_rotation_deg: f64,
    pub max_shift_frac: f64,
    pub max_zoom_frac: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
}

impl Default for TradAugConfig {
    fn default() -> Self {
        Self {
            blur_prob: 0.5,
            blur_sigma_range: [0.5, 1.5],
            rescale_prob: 0.5,
            rescale_percentiles: [2.0, 98.0],
            max_rotation_deg: 10.0,
            max_shift_frac: 0.2,
            max_zoom_frac: 0.5,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0} must be a probability in [0, 1]")]
    Probability(&'static str),
    #[error("{0} must be non-negative")]
    Negative(&'static str),
    #[error("percentiles must satisfy 0 <= low < high <= 100")]
    Percentiles,
    #[error("blur sigma range must be positive and ordered")]
    SigmaRange,
}

impl TradAugConfig {
    /// Every gate off and every range collapsed to zero.
    pub fn disabled() -> Self {
        Self {
            blur_prob: 0.0,
            rescale_prob: 0.0,
            max_rotation_deg: 0.0,
            max_shift_frac: 0.0,
            max_zoom_frac: 0.0,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, p) in [
            ("blur_prob", self.blur_prob),
            ("rescale_prob", self.rescale_prob),
            ("hflip_prob", self.hflip_prob),
            ("vflip_prob", self.vflip_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Probability(name));
            }
        }
        for (name, v) in [
            ("max_rotation_deg", self.max_rotation_deg),
            ("max_shift_frac", self.max_shift_frac),
            ("max_zoom_frac", self.max_zoom_frac),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(ConfigError::Negative(name));
            }
        }
        let [lo, hi] = self.rescale_percentiles;
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(ConfigError::Percentiles);
        }
        let [s0, s1] = self.blur_sigma_range;
        if !(s0 > 0.0 && s0 <= s1) {
            return Err(ConfigError::SigmaRange);
        }
        Ok(())
    }
}

/// One applied operation with its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugOp {
    Blur {
        sigma: f64,
    },
    Rescale {
        low_pct: f64,
        high_pct: f64,
    },
    Affine {
        rotation_deg: f64,
        shift_x_frac: f64,
        shift_y_frac: f64,
        zoom_frac: f64,
        hflip: bool,
        vflip: bool,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugRecord {
    pub ops: Vec<AugOp>,
}

impl AugRecord {
    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Value at percentile `pct` of the sorted intensities, interpolating
/// linearly between order statistics. Works off a 256-bin histogram.
fn percentile_from_hist(hist: &[usize; 256], n: usize, pct: f64) -> f64 {
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = math::floor(pos) as usize;
    let frac = pos - lo as f64;
    let nth = |k: usize| -> f64 {
        let mut seen = 0;
        for (v, &c) in hist.iter().enumerate() {
            seen += c;
            if seen > k {
                return v as f64;
            }
        }
        255.0
    };
    let a = nth(lo);
    if frac == 0.0 || lo + 1 >= n {
        a
    } else {
        a + frac * (nth(lo + 1) - a)
    }
}

/// Linearly maps the `low_pct` percentile to 0 and `high_pct` to 255,
/// clipping outside. Equal percentiles leave the image unchanged.
pub fn percentile_rescale(img: &GrayImage, low_pct: f64, high_pct: f64) -> GrayImage {
    let mut hist = [0usize; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let n = img.pixels().len();
    let lo = percentile_from_hist(&hist, n, low_pct);
    let hi = percentile_from_hist(&hist, n, high_pct);
    if hi <= lo {
        return img.clone();
    }
    let gain = 255.0 / (hi - lo);
    let lut: Vec<u8> = (0..256).map(|v| math::to_u8((v as f64 - lo) * gain)).collect();
    let mut out = img.clone();
    for p in out.pixels_mut() {
        *p = lut[*p as usize];
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = math::ceil(3.0 * sigma) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| math::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    k
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

/// Separable Gaussian blur, kernel truncated at 3 sigma and renormalized,
/// reflective borders. Non-positive sigma returns a copy.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma.is_nan() || sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, wt) in k.iter().enumerate() {
                let sx = reflect(x as i64 + j as i64 - r, w);
                acc += wt * f64::from(src[y * w + sx]);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = img.clone();
    let dst = out.pixels_mut();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, wt) in k.iter().enumerate() {
                let sy = reflect(y as i64 + j as i64 - r, h);
                acc += wt * tmp[sy * w + x];
            }
            dst[y * w + x] = math::to_u8(acc);
        }
    }
    out
}

/// Flip, zoom about the centre, rotate about the centre (counterclockwise as
/// displayed), then shift by a fraction of each dimension. One inverse
/// bilinear pass; samples from outside the frame read 0.
pub fn random_affine(
    img: &GrayImage,
    rotation_deg: f64,
    shift_x_frac: f64,
    shift_y_frac: f64,
    zoom_frac: f64,
    hflip: bool,
    vflip: bool,
) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let zoom = 1.0 + zoom_frac;
    let theta = rotation_deg.to_radians();
    let (c, s) = (math::cos(theta), math::sin(theta));
    let (tx, ty) = (shift_x_frac * w as f64, shift_y_frac * h as f64);
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let vx = x as f64 - cx - tx;
            let vy = y as f64 - cy - ty;
            let mut ux = (c * vx - s * vy) / zoom;
            let mut uy = (s * vx + c * vy) / zoom;
            if hflip {
                ux = -ux;
            }
            if vflip {
                uy = -uy;
            }
            out.set(x, y, math::to_u8(img.sample_bilinear_zero(cx + ux, cy + uy)));
        }
    }
    out
}

/// Samples and applies the traditional augmentation. Parameters are always
/// drawn in the same order, whatever the gates decide, so the generator
/// advances identically for every image.
pub fn apply_traditional<R: Rng + ?Sized>(
    img: &GrayImage,
    cfg: &TradAugConfig,
    rng: &mut R,
) -> (GrayImage, AugRecord) {
    let blur = rng.gen_bool(cfg.blur_prob);
    let sigma = rng.gen_range(cfg.blur_sigma_range[0]..=cfg.blur_sigma_range[1]);
    let rescale = rng.gen_bool(cfg.rescale_prob);
    let rot = cfg.max_rotation_deg;
    let rotation_deg = rng.gen_range(-rot..=rot);
    let shift = cfg.max_shift_frac;
    let shift_x_frac = rng.gen_range(-shift..=shift);
    let shift_y_frac = rng.gen_range(-shift..=shift);
    let zoom = cfg.max_zoom_frac;
    let zoom_frac = rng.gen_range(-zoom..=zoom);
    let hflip = rng.gen_bool(cfg.hflip_prob);
    let vflip = rng.gen_bool(cfg.vflip_prob);

    let mut record = AugRecord::default();
    let mut out = img.clone();
    if blur {
        out = gaussian_blur(&out, sigma);
        record.ops.push(AugOp::Blur { sigma });
    }
    if rescale {
        let [low_pct, high_pct] = cfg.rescale_percentiles;
        out = percentile_rescale(&out, low_pct, high_pct);
        record.ops.push(AugOp::Rescale { low_pct, high_pct });
    }
    let identity = rotation_deg == 0.0 && shift_x_frac == 0.0 && shift_y_frac == 0.0 && zoom_frac == 0.0 && !hflip && !vflip;
    if !identity {
        out = random_affine(&out, rotation_deg, shift_x_frac, shift_y_frac, zoom_frac, hflip, vflip);
        record.ops.push(AugOp::Affine {
            rotation_deg,
            shift_x_frac,
            shift_y_frac,
            zoom_frac,
            hflip,
            vflip,
        });
    }
    (out, record)
}

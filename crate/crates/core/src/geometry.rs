//! Binary-mask cleanup and shape measurement.
//!
//! Pixel `(x, y)` is treated as a point at its integer coordinates. Hole
//! filling floods the background with 4-connectivity from the border; object
//! components use 8-connectivity.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask is degenerate (fewer than three non-collinear pixels)")]
    DegenerateMask,
}

/// Row-major boolean occupancy grid.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl core::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Interprets intensities `>= 128` as foreground.
    pub fn from_intensities(width: usize, height: usize, values: &[u8]) -> Self {
        Self {
            width,
            height,
            bits: values.iter().map(|&v| v >= 128).collect(),
        }
    }

    /// 255 for foreground, 0 for background.
    pub fn to_intensities(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Intersection over union; two empty masks count as identical.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Copy shifted by `(dx, dy)`; pixels leaving the frame are dropped.
    pub fn translated(&self, dx: i64, dy: i64) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for (x, y) in self.points() {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                out.set(nx as usize, ny as usize, true);
            }
        }
        out
    }
}

/// Convex polygon with integer vertices, ordered with positive signed area
/// in `(x, y)` pixel coordinates. Collinear points are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HullPolygon {
    pub vertices: Vec<(i64, i64)>,
}

impl HullPolygon {
    /// Shoelace area of the polygon through the pixel points.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: i64 = (0..n)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice as f64 / 2.0
    }

    /// Point-in-polygon, boundary inclusive.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let (ax, ay) = self.vertices[i];
            let (bx, by) = self.vertices[(i + 1) % n];
            let cross = (bx - ax) as f64 * (y - ay as f64) - (by - ay) as f64 * (x - ax as f64);
            cross >= -1e-9
        })
    }

    /// The filled hull: every pixel whose point lies inside or on the polygon.
    pub fn rasterize(&self, width: usize, height: usize) -> BinaryMask {
        let mut out = BinaryMask::new(width, height);
        let ymin = self.vertices.iter().map(|v| v.1).min().unwrap_or(0).max(0);
        let ymax = self
            .vertices
            .iter()
            .map(|v| v.1)
            .max()
            .unwrap_or(-1)
            .min(height as i64 - 1);
        let n = self.vertices.len();
        for y in ymin..=ymax {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                if (y0 <= y && y <= y1) || (y1 <= y && y <= y0) {
                    if y0 == y1 {
                        lo = lo.min(x0.min(x1) as f64);
                        hi = hi.max(x0.max(x1) as f64);
                    } else {
                        let x = x0 as f64 + (y - y0) as f64 * (x1 - x0) as f64 / (y1 - y0) as f64;
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
            }
            if lo > hi {
                continue;
            }
            let start = math::ceil(lo - 1e-9).max(0.0) as usize;
            let end = math::floor(hi + 1e-9);
            if end < 0.0 {
                continue;
            }
            let end = (end as usize).min(width - 1);
            for x in start..=end {
                out.set(x, y as usize, true);
            }
        }
        out
    }
}

/// Second-order moment summary of the filled hull.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeStats {
    pub centroid: (f64, f64),
    /// Full axis lengths of the moment-equivalent ellipse.
    pub major_axis: f64,
    pub minor_axis: f64,
    /// Angle of the major axis from +x, radians, in pixel coordinates.
    pub orientation: f64,
    /// `sqrt(1 - (minor/major)^2)`.
    pub eccentricity: f64,
    /// `major/minor`, kept for audit.
    pub axis_ratio: f64,
    /// Pixel count of the filled hull.
    pub area: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl CircleFit {
    /// True when the disk's extreme points stay on pixel positions of a
    /// `width x height` frame.
    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.cx - self.r >= 0.0
            && self.cy - self.r >= 0.0
            && self.cx + self.r <= (width - 1) as f64
            && self.cy + self.r <= (height - 1) as f64
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        dx * dx + dy * dy <= self.r * self.r
    }
}

/// Sets every background pixel that cannot reach the border through
/// 4-connected background to foreground.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width, m.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !m.bits[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h.saturating_sub(1), &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w.saturating_sub(1), y, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        let mut visit = |j: usize| {
            if !m.bits[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < w {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - w);
        }
        if y + 1 < h {
            visit(i + w);
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits: outside.into_iter().map(|o| !o).collect(),
    }
}

/// Keeps the largest 8-connected component. On equal areas the component
/// holding the smallest row-major index wins.
pub fn largest_component(m: &BinaryMask) -> Result<BinaryMask, GeometryError> {
    let (w, h) = (m.width, m.height);
    let mut label = vec![0u32; w * h];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !m.bits[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        stack.push(start);
        let mut area = 0usize;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if m.bits[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        // Components are discovered in row-major order of their first pixel,
        // so a strict comparison implements the tie rule.
        if best.is_none_or(|(_, a)| area > a) {
            best = Some((next, area));
        }
    }
    let (keep, _) = best.ok_or(GeometryError::EmptyMask)?;
    Ok(BinaryMask {
        width: w,
        height: h,
        bits: label.into_iter().map(|l| l == keep).collect(),
    })
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of the foreground pixel points (monotone chain).
pub fn convex_hull(m: &BinaryMask) -> Result<HullPolygon, GeometryError> {
    // Only the extreme pixels of each row can be hull vertices.
    let mut pts: Vec<(i64, i64)> = Vec::new();
    for y in 0..m.height {
        let row = &m.bits[y * m.width..(y + 1) * m.width];
        if let Some(first) = row.iter().position(|&b| b) {
            let last = row.iter().rposition(|&b| b).unwrap_or(first);
            pts.push((first as i64, y as i64));
            if last != first {
                pts.push((last as i64, y as i64));
            }
        }
    }
    if pts.is_empty() {
        return Err(GeometryError::EmptyMask);
    }
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateMask);
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateMask);
    }
    Ok(HullPolygon { vertices: hull })
}

/// Everything derived from one hull computation.
#[derive(Debug, Clone)]
pub struct HullAnalysis {
    pub hull: HullPolygon,
    pub filled: BinaryMask,
    pub stats: ShapeStats,
    pub circle: CircleFit,
}

/// Hull, filled hull, moment statistics and equivalent-area circle in one pass.
pub fn analyze(m: &BinaryMask) -> Result<HullAnalysis, GeometryError> {
    let hull = convex_hull(m)?;
    let filled = hull.rasterize(m.width, m.height);
    let stats = moments(&filled)?;
    let circle = CircleFit {
        cx: stats.centroid.0,
        cy: stats.centroid.1,
        r: math::sqrt(stats.area as f64 / PI),
    };
    Ok(HullAnalysis {
        hull,
        filled,
        stats,
        circle,
    })
}

fn moments(filled: &BinaryMask) -> Result<ShapeStats, GeometryError> {
    let (mut n, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
    for (x, y) in filled.points() {
        n += 1;
        sx += x as f64;
        sy += y as f64;
    }
    if n < 3 {
        return Err(GeometryError::DegenerateMask);
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for (x, y) in filled.points() {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    let nf = n as f64;
    let (a, b, c) = (mu20 / nf, mu11 / nf, mu02 / nf);
    let half_diff = (a - c) / 2.0;
    let root = math::sqrt(half_diff * half_diff + b * b);
    let lambda1 = (a + c) / 2.0 + root;
    let lambda2 = ((a + c) / 2.0 - root).max(0.0);
    if lambda2 <= 0.0 {
        return Err(GeometryError::DegenerateMask);
    }
    let major = 4.0 * math::sqrt(lambda1);
    let minor = 4.0 * math::sqrt(lambda2);
    Ok(ShapeStats {
        centroid: (cx, cy),
        major_axis: major,
        minor_axis: minor,
        orientation: 0.5 * math::atan2(2.0 * b, a - c),
        eccentricity: math::sqrt((1.0 - lambda2 / lambda1).max(0.0)),
        axis_ratio: major / minor,
        area: n,
    })
}

/// Moment statistics of the filled convex hull of `m`.
pub fn shape_stats(m: &BinaryMask) -> Result<ShapeStats, GeometryError> {
    analyze(m).map(|a| a.stats)
}

/// Circle at the filled-hull centroid with the filled hull's area.
pub fn fit_circle(m: &BinaryMask) -> Result<CircleFit, GeometryError> {
    analyze(m).map(|a| a.circle)
}

/// Pixels within distance `r` of the centre, clipped to the frame.
pub fn rasterize_circle(c: &CircleFit, width: usize, height: usize) -> BinaryMask {
    let mut out = BinaryMask::new(width, height);
    if c.r <= 0.0 {
        return out;
    }
    let y0 = math::ceil(c.cy - c.r).max(0.0) as usize;
    let y1 = math::floor(c.cy + c.r).min(height as f64 - 1.0);
    let x0 = math::ceil(c.cx - c.r).max(0.0) as usize;
    let x1 = math::floor(c.cx + c.r).min(width as f64 - 1.0);
    if y1 < 0.0 || x1 < 0.0 {
        return out;
    }
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            if c.contains(x as f64, y as f64) {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Filled ellipse with semi-axes `a` (along `theta`) and `b`.
pub fn rasterize_ellipse(
    width: usize,
    height: usize,
    center: (f64, f64),
    semi_axes: (f64, f64),
    theta: f64,
) -> BinaryMask {
    let (ct, st) = (math::cos(theta), math::sin(theta));
    let (a, b) = semi_axes;
    BinaryMask::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - center.0, y as f64 - center.1);
        let u = dx * ct + dy * st;
        let v = -dx * st + dy * ct;
        (u * u) / (a * a) + (v * v) / (b * b) <= 1.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
        rasterize_circle(&CircleFit { cx, cy, r }, w, h)
    }

    #[test]
    fn annulus_fills_to_disk() {
        let outer = disk(100, 100, 50.0, 50.0, 30.0);
        let inner = disk(100, 100, 50.0, 50.0, 10.0);
        let annulus = BinaryMask::from_fn(100, 100, |x, y| outer.get(x, y) && !inner.get(x, y));
        assert_eq!(fill_holes(&annulus), outer);
        assert_eq!(fill_holes(&outer), outer);
    }

    #[test]
    fn keeps_larger_disk() {
        let big = disk(200, 120, 50.0, 60.0, 30.0);
        let small = disk(200, 120, 150.0, 60.0, 15.0);
        let both = BinaryMask::from_fn(200, 120, |x, y| big.get(x, y) || small.get(x, y));
        assert_eq!(largest_component(&both).unwrap(), big);
        assert_eq!(largest_component(&big).unwrap(), big);
        assert_eq!(largest_component(&BinaryMask::new(4, 4)), Err(GeometryError::EmptyMask));
    }

    #[test]
    fn twin_squares_tie_goes_to_first() {
        let m = BinaryMask::from_fn(30, 30, |x, y| {
            let a = (2..8).contains(&x) && (10..16).contains(&y);
            let b = (20..26).contains(&x) && (3..9).contains(&y);
            a || b
        });
        let kept = largest_component(&m).unwrap();
        // Square b starts at row 3, so it owns the smaller row-major index.
        assert!(kept.get(20, 3));
        assert!(!kept.get(2, 10));
    }

    #[test]
    fn square_hull_has_four_corners() {
        let m = BinaryMask::from_fn(40, 40, |x, y| (10..30).contains(&x) && (5..25).contains(&y));
        let hull = convex_hull(&m).unwrap();
        let mut v = hull.vertices.clone();
        v.sort_unstable();
        assert_eq!(v, [(10, 5), (10, 24), (29, 5), (29, 24)]);
        assert!(hull.area() > 0.0);
    }

    #[test]
    fn collinear_and_empty_masks_are_rejected() {
        let line = BinaryMask::from_fn(10, 10, |x, y| x == y);
        assert_eq!(convex_hull(&line), Err(GeometryError::DegenerateMask));
        assert_eq!(convex_hull(&BinaryMask::new(5, 5)), Err(GeometryError::EmptyMask));
    }

    #[test]
    fn plus_sign_hull_is_strictly_larger() {
        let plus = BinaryMask::from_fn(41, 41, |x, y| {
            ((15..26).contains(&x) && (5..36).contains(&y)) || ((5..36).contains(&x) && (15..26).contains(&y))
        });
        let filled = convex_hull(&plus).unwrap().rasterize(41, 41);
        assert!(filled.area() > plus.area());
        assert!(plus.points().all(|(x, y)| filled.get(x, y)));
    }

    #[test]
    fn equivalent_area_radius_of_square() {
        let sq = BinaryMask::from_fn(60, 60, |x, y| (20..40).contains(&x) && (20..40).contains(&y));
        let c = fit_circle(&sq).unwrap();
        assert!((c.r - (400.0 / PI).sqrt()).abs() < 0.2);
        assert!((c.cx - 29.5).abs() < 1e-9 && (c.cy - 29.5).abs() < 1e-9);
    }

    #[test]
    fn sub_pixel_circle_is_one_pixel() {
        let m = rasterize_circle(&CircleFit { cx: 5.0, cy: 7.0, r: 0.4 }, 10, 10);
        assert_eq!(m.area(), 1);
        assert!(m.get(5, 7));
    }

    #[test]
    fn disk_is_not_eccentric() {
        let m = disk(200, 200, 100.0, 100.0, 40.0);
        let s = shape_stats(&m).unwrap();
        assert!(s.eccentricity <= 0.05, "{}", s.eccentricity);
        assert!(s.major_axis >= s.minor_axis);
        // off-grid centres leave a small moment asymmetry
        let s = shape_stats(&disk(200, 200, 100.3, 99.6, 40.0)).unwrap();
        assert!(s.eccentricity <= 0.1, "{}", s.eccentricity);
    }
}

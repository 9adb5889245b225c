//! Loss curves (`series,epoch,loss[,replicate...]`) to SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 44.0;
const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStat {
    pub epoch: u32,
    pub mean: f64,
    /// Sample standard deviation; 0 with a single value.
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSeries {
    pub name: String,
    pub points: Vec<EpochStat>,
}

impl LossSeries {
    pub fn has_replicates(&self) -> bool {
        self.points.iter().any(|p| p.n >= 2)
    }
}

fn stat(epoch: u32, xs: &[f64]) -> EpochStat {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    EpochStat { epoch, mean, sd, n }
}

/// Series in order of first appearance. Extra columns and repeated
/// `(series, epoch)` rows are replicates of the same point.
pub fn parse_loss_csv(text: &str, path: &Path) -> Result<Vec<LossSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::data(path.display(), e))?.clone();
    let names: Vec<&str> = header.iter().take(3).collect();
    if names != ["series", "epoch", "loss"] {
        return Err(Error::data(path.display(), "header must start with series,epoch,loss"));
    }
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::data(path.display(), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::data(format!("{} line {line}", path.display()), what);
        if rec.len() < 3 {
            return Err(bad("expected at least 3 columns"));
        }
        let series = rec[0].to_string();
        if series.is_empty() {
            return Err(bad("empty series name"));
        }
        let epoch: u32 = rec[1].parse().map_err(|_| bad("epoch is not a non-negative integer"))?;
        let mut row = Vec::new();
        for cell in rec.iter().skip(2).filter(|c| !c.is_empty()) {
            let v: f64 = cell.parse().map_err(|_| bad("loss is not a number"))?;
            if !v.is_finite() {
                return Err(bad("loss is not finite"));
            }
            row.push(v);
        }
        if row.is_empty() {
            return Err(bad("missing loss value"));
        }
        if !values.contains_key(&series) {
            order.push(series.clone());
        }
        values.entry(series).or_default().entry(epoch).or_default().extend(row);
    }
    if order.is_empty() {
        return Err(Error::data(path.display(), "empty input"));
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let points = values[&name].iter().map(|(&e, xs)| stat(e, xs)).collect();
            LossSeries { name, points }
        })
        .collect())
}

/// Data-to-pixel mapping of the plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Axes {
    pub fn fit(series: &[LossSeries]) -> Self {
        let pts = series.iter().flat_map(|s| &s.points);
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x_min = x_min.min(p.epoch as f64);
            x_max = x_max.max(p.epoch as f64);
            y_min = y_min.min(p.mean - p.sd);
            y_max = y_max.max(p.mean + p.sd);
        }
        if x_max - x_min < 1.0 {
            x_min -= 0.5;
            x_max += 0.5;
        }
        let span = y_max - y_min;
        let pad = if span < 1e-12 {
            (y_max.abs() * 0.1).max(0.5)
        } else {
            span * 0.05
        };
        Self {
            x_min,
            x_max,
            y_min: y_min - pad,
            y_max: y_max + pad,
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        TOP + (self.y_max - y) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }

    /// Pixels per data unit on the y axis.
    pub fn y_scale(&self) -> f64 {
        (HEIGHT - TOP - BOTTOM) / (self.y_max - self.y_min)
    }
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(series: &[LossSeries]) -> String {
    let ax = Axes::fit(series);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    for t in nice_ticks(ax.x_min, ax.x_max, 8) {
        let x = ax.px(t);
        let _ = writeln!(
            s,
            r#"<g class="xtick"><line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text></g>"#,
            y1 + 4.0,
            y1 + 16.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(ax.y_min, ax.y_max, 6) {
        let y = ax.py(t);
        let _ = writeln!(
            s,
            r#"<g class="ytick"><line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text></g>"#,
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">loss</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.has_replicates() {
            let upper = ser.points.iter().map(|p| (ax.px(p.epoch as f64), ax.py(p.mean + p.sd)));
            let lower = ser.points.iter().rev().map(|p| (ax.px(p.epoch as f64), ax.py(p.mean - p.sd)));
            let pts: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" data-series="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                escape(&ser.name),
                pts.join(" ")
            );
        }
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", ax.px(p.epoch as f64), ax.py(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            escape(&ser.name),
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            x1 + 12.0,
            x1 + 32.0,
            x1 + 38.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

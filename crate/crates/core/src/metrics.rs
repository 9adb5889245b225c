//! Classification evaluation and two-tailed t-tests from summary statistics.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::math;

const N: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub true_label: ClassLabel,
    pub predicted: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PredictionError {
    #[error("duplicate prediction id {0:?}")]
    DuplicateId(String),
    #[error("prediction set is empty")]
    Empty,
}

/// Predictions with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    rows: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(rows: Vec<Prediction>) -> Result<Self, PredictionError> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !seen.insert(r.id.as_str()) {
                return Err(PredictionError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Prediction] {
        &self.rows
    }
}

/// Rows are true classes, columns predicted classes, both in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N]; N],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    /// Row-normalized view; rows without support are `None`.
    pub fn normalized(&self) -> [Option<[f64; N]>; N] {
        core::array::from_fn(|i| {
            let s = self.row_sum(i);
            (s > 0).then(|| core::array::from_fn(|j| self.counts[i][j] as f64 / s as f64))
        })
    }
}

pub fn confusion(preds: &PredictionSet) -> Result<ConfusionMatrix, PredictionError> {
    if preds.rows.is_empty() {
        return Err(PredictionError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for p in &preds.rows {
        cm.counts[p.true_label.index()][p.predicted.index()] += 1;
    }
    Ok(cm)
}

/// Percent-scale evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `None` for classes with no true examples.
    pub per_class_recall: [Option<f64>; N],
    pub per_class_precision: [Option<f64>; N],
    pub per_class_f1: [f64; N],
    pub confusion: ConfusionMatrix,
}

/// Accuracy, per-class precision/recall/F1 and their unweighted mean.
pub fn report(cm: &ConfusionMatrix) -> EvalReport {
    let total = cm.total();
    let trace: u64 = (0..N).map(|i| cm.counts[i][i]).sum();
    let accuracy = if total == 0 {
        0.0
    } else {
        100.0 * trace as f64 / total as f64
    };
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let recall: [Option<f64>; N] = core::array::from_fn(|i| ratio(cm.counts[i][i], cm.row_sum(i)));
    let precision: [Option<f64>; N] = core::array::from_fn(|i| ratio(cm.counts[i][i], cm.col_sum(i)));
    let f1: [f64; N] = core::array::from_fn(|i| {
        let (p, r) = (precision[i].unwrap_or(0.0), recall[i].unwrap_or(0.0));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    });
    EvalReport {
        accuracy,
        macro_f1: 100.0 * f1.iter().sum::<f64>() / N as f64,
        per_class_recall: recall.map(|v| v.map(|x| 100.0 * x)),
        per_class_precision: precision.map(|v| v.map(|x| 100.0 * x)),
        per_class_f1: f1.map(|x| 100.0 * x),
        confusion: *cm,
    }
}

impl fmt::Display for EvalReport {
    /// Aligned text table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy  {:>7.2}", self.accuracy)?;
        writeln!(f, "macro_f1  {:>7.2}", self.macro_f1)?;
        writeln!(f, "{:<6}{:>10}{:>11}{:>9}", "class", "recall", "precision", "f1")?;
        let cell = |v: Option<f64>| match v {
            Some(x) => alloc::format!("{x:.2}"),
            None => String::from("-"),
        };
        for label in ClassLabel::ALL {
            let i = label.index();
            writeln!(
                f,
                "{:<6}{:>10}{:>11}{:>9.2}",
                label.as_str(),
                cell(self.per_class_recall[i]),
                cell(self.per_class_precision[i]),
                self.per_class_f1[i]
            )?;
        }
        Ok(())
    }
}

/// Mean, sample standard deviation (n - 1 denominator) and replicate count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub sd: f64,
    pub n: u32,
}

impl SummaryStat {
    pub fn new(mean: f64, sd: f64, n: u32) -> Self {
        Self { mean, sd, n }
    }

    /// Summary of raw replicate values; `None` when empty.
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() < 2 {
            0.0
        } else {
            math::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
        };
        Some(Self {
            mean,
            sd,
            n: xs.len() as u32,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum TTestError {
    #[error("need at least two replicates per group, got {0}")]
    TooFewReplicates(u32),
    #[error("standard deviation must be finite and non-negative, got {0}")]
    BadDeviation(f64),
    /// No spread to scale the difference by. The conventional p-value is
    /// carried along (1 for equal means, 0 otherwise).
    #[error("zero variance (p = {p})")]
    ZeroVariance { p: f64 },
}

impl TTestError {
    /// The conventional p-value for degenerate inputs, if any.
    pub fn degenerate_p(&self) -> Option<f64> {
        match self {
            TTestError::ZeroVariance { p } => Some(*p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn check(s: &SummaryStat) -> Result<(), TTestError> {
    if s.n < 2 {
        return Err(TTestError::TooFewReplicates(s.n));
    }
    if !s.sd.is_finite() || s.sd < 0.0 {
        return Err(TTestError::BadDeviation(s.sd));
    }
    Ok(())
}

/// Pooled-variance Student's t-test, two-tailed.
pub fn t_test_two_sample(a: &SummaryStat, b: &SummaryStat) -> Result<TTestResult, TTestError> {
    check(a)?;
    check(b)?;
    let (n1, n2) = (f64::from(a.n), f64::from(b.n));
    let df = n1 + n2 - 2.0;
    let pooled = ((n1 - 1.0) * a.sd * a.sd + (n2 - 1.0) * b.sd * b.sd) / df;
    let diff = math::abs(a.mean - b.mean);
    if pooled == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return Err(TTestError::ZeroVariance { p });
    }
    let t = diff / (math::sqrt(pooled) * math::sqrt(1.0 / n1 + 1.0 / n2));
    Ok(TTestResult {
        t,
        df,
        p: two_tailed_p(t, df),
    })
}

/// One-sample t-test of `a` against a fixed reference, two-tailed.
pub fn t_test_one_sample(a: &SummaryStat, mu: f64) -> Result<TTestResult, TTestError> {
    check(a)?;
    let n = f64::from(a.n);
    let df = n - 1.0;
    let diff = math::abs(a.mean - mu);
    if diff == 0.0 {
        return Ok(TTestResult { t: 0.0, df, p: 1.0 });
    }
    if a.sd == 0.0 {
        return Err(TTestError::ZeroVariance { p: 0.0 });
    }
    let t = diff / (a.sd / math::sqrt(n));
    Ok(TTestResult {
        t,
        df,
        p: two_tailed_p(t, df),
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn two_tailed_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Cumulative distribution of Student's t.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * two_tailed_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `I_x(a, b)`, evaluated with the continued fraction on whichever side of
/// the mean converges fastest.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::ln_gamma(a + b) - math::ln_gamma(a) - math::ln_gamma(b) + a * math::ln(x) + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if math::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if math::abs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

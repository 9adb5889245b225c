//! Predictions CSV (`id,true,pred`) to evaluation report.

use std::path::Path;

use hybridaug_core::metrics::{confusion, report, ConfusionMatrix, EvalReport, Prediction, PredictionSet};
use hybridaug_core::ClassLabel;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::{read_text, write_text};

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    #[serde(rename = "true")]
    truth: String,
    pred: String,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::data(format!("{} line {}", path.display(), pos.line()), e),
        None => Error::data(path.display(), e),
    }
}

/// Parses a predictions CSV with header `id,true,pred`.
pub fn parse_predictions(text: &str, path: &Path) -> Result<PredictionSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| csv_error(path, e))?;
        let label = |s: &str| {
            s.parse::<ClassLabel>()
                .map_err(|e| Error::data(format!("{} line {line}", path.display()), e))
        };
        rows.push(Prediction {
            true_label: label(&row.truth)?,
            predicted: label(&row.pred)?,
            id: row.id,
        });
    }
    PredictionSet::new(rows).map_err(|e| Error::data(path.display(), e))
}

pub fn load_predictions(path: &Path) -> Result<PredictionSet> {
    parse_predictions(&read_text(path)?, path)
}

pub fn evaluate(preds: &PredictionSet, context: &Path) -> Result<EvalReport> {
    let cm = confusion(preds).map_err(|e| Error::data(context.display(), e))?;
    Ok(report(&cm))
}

/// Confusion matrix as CSV, true classes down, predictions across.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\pred");
    for l in ClassLabel::ALL {
        out.push(',');
        out.push_str(l.as_str());
    }
    out.push('\n');
    for (l, row) in ClassLabel::ALL.iter().zip(&cm.counts) {
        out.push_str(l.as_str());
        for c in row {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

/// Writes `report.json`, `report.txt` and `confusion.csv` into `out`.
pub fn write_report(out: &Path, r: &EvalReport) -> Result<()> {
    let json = serde_json::to_string_pretty(r).map_err(|e| Error::data("report", e))?;
    write_text(&out.join("report.json"), &(json + "\n"))?;
    write_text(&out.join("report.txt"), &r.to_string())?;
    write_text(&out.join("confusion.csv"), &confusion_csv(&r.confusion))
}

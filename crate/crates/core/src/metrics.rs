//! Pixel-level segmentation scores: accuracy, sensitivity, specificity,
//! Dice and Jaccard.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::raster::LesionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub ac: f64,
    pub se: f64,
    pub sp: f64,
    pub di: f64,
    pub ja: f64,
}

impl MetricsReport {
    pub fn values(&self) -> [f64; 5] {
        [self.ac, self.se, self.sp, self.di, self.ja]
    }

    /// Column-wise mean; `None` for an empty slice.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mut sum = [0.0; 5];
        for r in reports {
            for (s, v) in sum.iter_mut().zip(r.values()) {
                *s += v;
            }
        }
        let [ac, se, sp, di, ja] = sum.map(|s| s / n);
        Some(MetricsReport { ac, se, sp, di, ja })
    }
}

/// Lesion pixels are positives.
pub fn confusion(pred: &LesionMask, gt: &LesionMask) -> Result<ConfusionCounts> {
    if !pred.same_shape(gt) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Ratios with 0/0 taken as 1.
pub fn compute(c: &ConfusionCounts) -> MetricsReport {
    MetricsReport {
        ac: ratio(c.tp + c.tn, c.total()),
        se: ratio(c.tp, c.tp + c.fn_),
        sp: ratio(c.tn, c.tn + c.fp),
        di: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        ja: ratio(c.tp, c.tp + c.fp + c.fn_),
    }
}

pub fn evaluate(pred: &LesionMask, gt: &LesionMask) -> Result<MetricsReport> {
    confusion(pred, gt).map(|c| compute(&c))
}

/// Outcome of one image in a report.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Scored(MetricsReport),
    /// A status word such as `no_gt` or `error`; excluded from the mean.
    Skipped(String),
}

pub const CSV_HEADER: &str = "image,ac,se,sp,di,ja";

/// Writes the header, rows sorted by image name, then a `mean` row over the
/// scored rows (left empty if there are none).
pub fn write_csv(mut out: impl Write, rows: &[(String, RowStatus)]) -> io::Result<()> {
    let mut sorted: Vec<&(String, RowStatus)> = rows.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    writeln!(out, "{CSV_HEADER}")?;
    let fmt = |r: &MetricsReport| r.values().map(|v| format!("{v:.6}")).join(",");
    for (name, status) in &sorted {
        match status {
            RowStatus::Scored(r) => writeln!(out, "{name},{}", fmt(r))?,
            RowStatus::Skipped(status) => writeln!(out, "{name},{status},,,,")?,
        }
    }
    let scored: Vec<MetricsReport> = sorted
        .iter()
        .filter_map(|(_, s)| match s {
            RowStatus::Scored(r) => Some(*r),
            RowStatus::Skipped(_) => None,
        })
        .collect();
    match MetricsReport::mean(&scored) {
        Some(m) => writeln!(out, "mean,{}", fmt(&m)),
        None => writeln!(out, "mean,,,,,"),
    }
}

//! Confidence-weighted fusion of per-scale score maps.

use crate::error::{Error, Result};
use crate::raster::ScoreMap;

pub const MIN_VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_EXPONENT: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleResult {
    pub scale: usize,
    /// `None` when the scale is degenerate.
    pub score: Option<ScoreMap>,
    pub sigma2_b: f64,
}

impl ScaleResult {
    pub fn new(scale: usize, score: ScoreMap, sigma2_b: f64) -> Self {
        Self { scale, score: Some(score), sigma2_b }
    }

    pub fn degenerate(scale: usize) -> Self {
        Self { scale, score: None, sigma2_b: 0.0 }
    }

    pub fn is_degenerate(&self) -> bool {
        self.score.is_none()
    }
}

/// `exp((s - min) / max(min, floor))`, exponent capped at 50.
pub fn scale_weight(sigma2_b: f64, min_sigma2_b: f64) -> f64 {
    let exponent = (sigma2_b - min_sigma2_b) / min_sigma2_b.max(MIN_VARIANCE_FLOOR);
    exponent.min(MAX_EXPONENT).exp()
}

/// Weighted per-pixel average over the non-degenerate scales.
pub fn integrate(results: &[ScaleResult]) -> Result<ScoreMap> {
    let live: Vec<(&ScoreMap, f64)> =
        results.iter().filter_map(|r| r.score.as_ref().map(|m| (m, r.sigma2_b))).collect();
    let Some(&(first, _)) = live.first() else {
        return Err(Error::AllScalesDegenerate);
    };
    let (w, h) = (first.width(), first.height());
    if let Some((m, _)) = live.iter().find(|(m, _)| (m.width(), m.height()) != (w, h)) {
        return Err(Error::DimensionMismatch(format!(
            "score maps {}x{} and {}x{}",
            w,
            h,
            m.width(),
            m.height()
        )));
    }
    let min = live.iter().map(|&(_, s)| s).fold(f64::INFINITY, f64::min);
    // accumulate in scale order so the sum does not depend on input order
    let mut weighted: Vec<(usize, &ScoreMap, f64)> =
        results.iter().filter_map(|r| r.score.as_ref().map(|m| (r.scale, m, scale_weight(r.sigma2_b, min)))).collect();
    weighted.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.total_cmp(&b.2)));
    let total: f64 = weighted.iter().map(|&(_, _, wt)| wt).sum();
    let data = (0..w * h)
        .map(|i| {
            let v = weighted.iter().map(|&(_, m, wt)| wt * m.data()[i]).sum::<f64>() / total;
            v.clamp(0.0, 1.0)
        })
        .collect();
    ScoreMap::new(w, h, data)
}

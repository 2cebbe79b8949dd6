//! Splitting regions into a darker lesion class and a lighter healthy class
//! by maximizing the between-class variance of region mean intensities.

use crate::error::{Error, Result};
use crate::raster::RgbImage;
use crate::se::Partition;
use crate::superpixel::SuperpixelLabeling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Pixel share and mean intensity of one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionIntensity {
    pub region: usize,
    pub omega: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub threshold_tau: f64,
    pub sigma2_b: f64,
    /// Darker class.
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionResult {
    pub channel: Channel,
    pub threshold_tau: f64,
    pub lesion_regions: Vec<usize>,
    pub healthy_regions: Vec<usize>,
    pub sigma2_b: f64,
}

/// Pixel fraction and mean channel intensity of every module of `p`, where
/// partition nodes are the superpixels of `sp`.
pub fn region_intensities(
    img: &RgbImage,
    sp: &SuperpixelLabeling,
    p: &Partition,
    channel: Channel,
) -> Vec<RegionIntensity> {
    let n_regions = p.n_modules();
    let mut count = vec![0usize; n_regions];
    let mut sum = vec![0.0f64; n_regions];
    for (&label, px) in sp.labels.iter().zip(img.pixels()) {
        let region = p.module_of(label as usize);
        count[region] += 1;
        sum[region] += px[channel.index()];
    }
    let total = img.len() as f64;
    (0..n_regions)
        .filter(|&r| count[r] > 0)
        .map(|r| RegionIntensity { region: r, omega: count[r] as f64 / total, mu: sum[r] / count[r] as f64 })
        .collect()
}

/// Between-class variance of an explicit two-class split, from scratch.
pub fn between_class_variance(regions: &[RegionIntensity], in_lower: impl Fn(usize) -> bool) -> f64 {
    // means are taken relative to the first region so equal means cancel exactly
    let base = regions.first().map_or(0.0, |r| r.mu);
    let total: f64 = regions.iter().map(|r| r.omega).sum();
    let mu_t = regions.iter().map(|r| r.omega * (r.mu - base)).sum::<f64>() / total;
    let (mut w0, mut m0, mut w1, mut m1) = (0.0, 0.0, 0.0, 0.0);
    for r in regions {
        if in_lower(r.region) {
            w0 += r.omega;
            m0 += r.omega * (r.mu - base);
        } else {
            w1 += r.omega;
            m1 += r.omega * (r.mu - base);
        }
    }
    let mut s = 0.0;
    if w0 > 0.0 {
        s += w0 * (m0 / w0 - mu_t).powi(2);
    }
    if w1 > 0.0 {
        s += w1 * (m1 / w1 - mu_t).powi(2);
    }
    s
}

/// Scans every split of the regions sorted by mean and keeps the one with
/// the largest between-class variance (lowest split on ties).
pub fn bisect(regions: &[RegionIntensity]) -> Result<Split> {
    if regions.len() < 2 {
        return Err(Error::SingleRegion);
    }
    let mut sorted = regions.to_vec();
    sorted.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(a.region.cmp(&b.region)));
    let base = sorted[0].mu;
    let total: f64 = sorted.iter().map(|r| r.omega).sum();
    let mass: f64 = sorted.iter().map(|r| r.omega * (r.mu - base)).sum();
    let mu_t = mass / total;

    let mut best: Option<(usize, f64)> = None;
    let (mut w0, mut m0) = (0.0, 0.0);
    for k in 0..sorted.len() - 1 {
        w0 += sorted[k].omega;
        m0 += sorted[k].omega * (sorted[k].mu - base);
        let w1 = total - w0;
        let mu0 = m0 / w0;
        let mu1 = (mass - m0) / w1;
        let s = w0 * (mu0 - mu_t).powi(2) + w1 * (mu1 - mu_t).powi(2);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    let (k, _) = best.expect("at least one split");
    let lower: Vec<usize> = sorted[..=k].iter().map(|r| r.region).collect();
    let upper: Vec<usize> = sorted[k + 1..].iter().map(|r| r.region).collect();
    let sigma2_b = between_class_variance(regions, |r| lower.contains(&r));
    Ok(Split { threshold_tau: 0.5 * (sorted[k].mu + sorted[k + 1].mu), sigma2_b, lower, upper })
}

/// Bisects on each of R, G and B and keeps the channel with the largest
/// between-class variance (R, then G, then B on ties).
pub fn select_channel(img: &RgbImage, sp: &SuperpixelLabeling, p: &Partition) -> Result<BisectionResult> {
    let mut best: Option<(Channel, Split)> = None;
    for channel in Channel::ALL {
        let split = bisect(&region_intensities(img, sp, p, channel))?;
        if best.as_ref().is_none_or(|(_, b)| split.sigma2_b > b.sigma2_b) {
            best = Some((channel, split));
        }
    }
    let (channel, split) = best.expect("three channels");
    Ok(BisectionResult {
        channel,
        threshold_tau: split.threshold_tau,
        lesion_regions: split.lower,
        healthy_regions: split.upper,
        sigma2_b: split.sigma2_b,
    })
}

//! Score-map binarization and lesion cleanup.
//!
//! Thresholding uses generalized histogram thresholding (Barron 2020) over a
//! 256-bin histogram. Otsu's method and minimum error thresholding are kept
//! alongside as independent references for its two limiting cases.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::preprocess::neighbors4;
use crate::raster::{LesionMask, ScoreMap};
use crate::superpixel::label_components;

pub const BINS: usize = 256;
pub const FALLBACK_THRESHOLD: f64 = 0.5;
const CLIP: f64 = 1e-30;

pub type Histogram = [u64; BINS];

/// Bin of score `s`: `min(floor(256 s), 255)`.
pub fn score_bin(s: f64) -> usize {
    ((s * BINS as f64).floor() as usize).min(BINS - 1)
}

pub fn score_histogram(map: &ScoreMap) -> Histogram {
    let mut h = [0u64; BINS];
    for &s in map.data() {
        h[score_bin(s)] += 1;
    }
    h
}

/// Lower edge of the upper class for split `t` (bins `0..=t` vs the rest).
pub fn split_to_threshold(t: usize) -> f64 {
    (t + 1) as f64 / BINS as f64
}

/// GHT hyperparameters. `tau` is measured in histogram bins, the same units
/// as the bin index the objective is computed over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhtParams {
    pub nu: f64,
    pub tau: f64,
    pub kappa: f64,
    pub omega: f64,
}

impl GhtParams {
    pub const DEFAULT_TAU: f64 = 24.0;
    pub const DEFAULT_OMEGA: f64 = 0.5;
    pub const DEFAULT_NU_PER_PIXEL: f64 = 10.0;
    pub const DEFAULT_KAPPA_PER_PIXEL: f64 = 0.1;

    /// `nu = 10 * n_pixels`, `kappa = 0.1 * n_pixels`.
    ///
    /// A strong variance prior of about 24 bins keeps the split from isolating
    /// a narrow peak of high scores, which would make multi-scale fusion act
    /// like an intersection of the per-scale masks.
    pub fn for_pixels(n_pixels: usize) -> Self {
        let n = n_pixels as f64;
        Self {
            nu: Self::DEFAULT_NU_PER_PIXEL * n,
            tau: Self::DEFAULT_TAU,
            kappa: Self::DEFAULT_KAPPA_PER_PIXEL * n,
            omega: Self::DEFAULT_OMEGA,
        }
    }
}

fn check_histogram(hist: &Histogram) -> Result<()> {
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    Ok(())
}

/// Prefix sums of counts, first and second moments over bin indices.
fn prefix_moments(hist: &Histogram) -> Vec<(u128, u128, u128)> {
    let mut acc = (0u128, 0u128, 0u128);
    hist.iter()
        .enumerate()
        .map(|(x, &n)| {
            let (n, x) = (n as u128, x as u128);
            acc = (acc.0 + n, acc.1 + n * x, acc.2 + n * x * x);
            acc
        })
        .collect()
}

/// Weight and squared deviation sum `S2 - S1^2/w` of one class.
fn class_moments(w: u128, s1: u128, s2: u128) -> (f64, f64) {
    if w == 0 {
        return (0.0, 0.0);
    }
    // w*S2 - S1^2 is exact in integers and never negative
    let num = w * s2 - s1 * s1;
    (w as f64, num as f64 / w as f64)
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// GHT objective for every split `t in 0..255`.
pub fn ght_objective(hist: &Histogram, params: &GhtParams) -> Vec<f64> {
    let pre = prefix_moments(hist);
    let total = *pre.last().expect("256 bins");
    let tau2 = params.tau * params.tau;
    (0..BINS - 1)
        .map(|t| {
            let lo = pre[t];
            let hi = (total.0 - lo.0, total.1 - lo.1, total.2 - lo.2);
            let (w0, d0) = class_moments(lo.0, lo.1, lo.2);
            let (w1, d1) = class_moments(hi.0, hi.1, hi.2);
            let (w0, w1) = (w0.max(CLIP), w1.max(CLIP));
            let p0 = w0 / (w0 + w1);
            let p1 = w1 / (w0 + w1);
            let v0 = ((p0 * params.nu * tau2 + d0) / (p0 * params.nu + w0)).max(CLIP);
            let v1 = ((p1 * params.nu * tau2 + d1) / (p1 * params.nu + w1)).max(CLIP);
            let f0 = -d0 / v0 - w0 * v0.ln() + 2.0 * (w0 + params.kappa * params.omega) * w0.ln();
            let f1 = -d1 / v1 - w1 * v1.ln() + 2.0 * (w1 + params.kappa * (1.0 - params.omega)) * w1.ln();
            f0 + f1
        })
        .collect()
}

/// Split bin maximizing the GHT objective, lowest bin on ties.
pub fn ght_split(hist: &Histogram, params: &GhtParams) -> Result<usize> {
    check_histogram(hist)?;
    Ok(argmax_lowest(ght_objective(hist, params).into_iter()))
}

pub fn ght_threshold(hist: &Histogram, params: &GhtParams) -> Result<f64> {
    ght_split(hist, params).map(split_to_threshold)
}

/// Otsu's split: maximizes `w0 w1 (mu0 - mu1)^2`.
pub fn otsu_split(hist: &Histogram) -> Result<usize> {
    check_histogram(hist)?;
    let mut w0 = 0i128;
    let mut s0 = 0i128;
    let w: i128 = hist.iter().map(|&n| n as i128).sum();
    let s: i128 = hist.iter().enumerate().map(|(x, &n)| n as i128 * x as i128).sum();
    let between = (0..BINS - 1).map(|t| {
        w0 += hist[t] as i128;
        s0 += hist[t] as i128 * t as i128;
        let (w1, s1) = (w - w0, s - s0);
        if w0 == 0 || w1 == 0 {
            return 0.0;
        }
        // w0 w1 (mu0 - mu1)^2 = (w1 s0 - w0 s1)^2 / (w0 w1)
        let diff = w1 * s0 - w0 * s1;
        (diff * diff) as f64 / (w0 as f64 * w1 as f64)
    });
    Ok(argmax_lowest(between))
}

/// Minimum error thresholding: the split maximizing the two-Gaussian log
/// likelihood `sum_k (w_k ln w_k^2 - w_k ln v_k - d_k / v_k)`.
pub fn met_split(hist: &Histogram) -> Result<usize> {
    check_histogram(hist)?;
    let class = |bins: &[u64], offset: usize| -> f64 {
        let w: f64 = bins.iter().map(|&n| n as f64).sum();
        let w_safe = w.max(CLIP);
        let mean = bins.iter().enumerate().map(|(i, &n)| n as f64 * (i + offset) as f64).sum::<f64>() / w_safe;
        let d: f64 = bins
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let e = (i + offset) as f64 - mean;
                n as f64 * e * e
            })
            .sum();
        let v = (d / w_safe).max(CLIP);
        -d / v - w_safe * v.ln() + 2.0 * w_safe * w_safe.ln()
    };
    Ok(argmax_lowest((0..BINS - 1).map(|t| class(&hist[..=t], 0) + class(&hist[t + 1..], t + 1))))
}

/// Pixels scoring at or above `threshold`.
pub fn binarize(map: &ScoreMap, threshold: f64) -> LesionMask {
    LesionMask::from_vec(map.width(), map.height(), map.data().iter().map(|&s| s >= threshold).collect())
        .expect("shape preserved")
}

/// Sets background regions that cannot reach the border to lesion.
pub fn fill_holes(mask: &LesionMask) -> LesionMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) && !mask.get(r, c) {
                outside[r * w + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for (nr, nc) in neighbors4(r, c, w, h) {
            if !mask.get(nr, nc) && !outside[nr * w + nc] {
                outside[nr * w + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    LesionMask::from_vec(w, h, outside.into_iter().map(|o| !o).collect()).expect("shape preserved")
}

/// Sum of an isotropic Gaussian centred on the image, `sigma = 0.5 min(H, W)`,
/// over each 4-connected lesion component; labels follow scan order and only
/// lesion components are listed.
pub fn component_scores(mask: &LesionMask) -> (Vec<usize>, Vec<(usize, f64)>) {
    let (w, h) = (mask.width(), mask.height());
    let data = mask.data();
    let (comp, sizes) = label_components(w, h, |a, b| data[a] == data[b]);
    let sigma = 0.5 * w.min(h) as f64;
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut score = vec![0.0; sizes.len()];
    let mut is_lesion = vec![false; sizes.len()];
    for (idx, &lab) in comp.iter().enumerate() {
        if data[idx] {
            let (dr, dc) = ((idx / w) as f64 - cr, (idx % w) as f64 - cc);
            score[lab] += (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp();
            is_lesion[lab] = true;
        }
    }
    let listed = (0..sizes.len()).filter(|&l| is_lesion[l]).map(|l| (l, score[l])).collect();
    (comp, listed)
}

/// Keeps the lesion component with the largest centred-Gaussian score.
/// Scores within a relative 1e-12 count as equal; the earlier one wins.
pub fn select_component(mask: &LesionMask) -> Result<LesionMask> {
    let (comp, scores) = component_scores(mask);
    let mut best: Option<(usize, f64)> = None;
    for (label, s) in scores {
        match best {
            Some((_, b)) if s <= b || (s - b) <= 1e-12 * b.abs() => {}
            _ => best = Some((label, s)),
        }
    }
    let (keep, _) = best.ok_or(Error::EmptyMask)?;
    Ok(LesionMask::from_vec(mask.width(), mask.height(), comp.iter().map(|&l| l == keep).collect())
        .expect("shape preserved"))
}

/// Histogram threshold, hole filling and component selection. A single
/// occupied bin falls back to the 0.5 threshold.
pub fn finalize(map: &ScoreMap, params: &GhtParams) -> Result<LesionMask> {
    let threshold = match ght_threshold(&score_histogram(map), params) {
        Ok(t) => t,
        Err(Error::DegenerateHistogram) => {
            log::warn!("score histogram has a single occupied bin, thresholding at {FALLBACK_THRESHOLD}");
            FALLBACK_THRESHOLD
        }
        Err(e) => return Err(e),
    };
    select_component(&fill_holes(&binarize(map, threshold)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spikes(bins: &[(usize, u64)]) -> Histogram {
        let mut h = [0u64; BINS];
        for &(b, n) in bins {
            h[b] += n;
        }
        h
    }

    fn mask_from(rows: &[&str]) -> LesionMask {
        let w = rows[0].len();
        LesionMask::from_fn(w, rows.len(), |r, c| rows[r].as_bytes()[c] == b'#')
    }

    /// Objective written out per class with plain loops.
    fn naive_ght(hist: &Histogram, p: &GhtParams, t: usize) -> f64 {
        let tau2 = p.tau * p.tau;
        let n: f64 = hist.iter().map(|&c| c as f64).sum();
        let mut f = 0.0;
        for (range, om) in [(0..=t, p.omega), (t + 1..=255, 1.0 - p.omega)] {
            let w: f64 = range.clone().map(|i| hist[i] as f64).sum::<f64>().max(1e-30);
            let mean = range.clone().map(|i| hist[i] as f64 * i as f64).sum::<f64>() / w;
            let d: f64 = range.map(|i| hist[i] as f64 * (i as f64 - mean).powi(2)).sum();
            let prior = w / n;
            let v = ((prior * p.nu * tau2 + d) / (prior * p.nu + w)).max(1e-30);
            f += -d / v - w * v.ln() + 2.0 * (w + p.kappa * om) * w.ln();
        }
        f
    }

    #[test]
    fn two_spikes_threshold_between() {
        let h = spikes(&[(51, 500), (204, 500)]);
        let p = GhtParams::for_pixels(1000);
        let t = ght_split(&h, &p).unwrap();
        assert!((51..204).contains(&t), "split {t}");
        let scanned = (0..255).map(|t| naive_ght(&h, &p, t)).collect::<Vec<_>>();
        let best = scanned.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((scanned[t] - best).abs() <= 1e-9 * best.abs());
        let th = ght_threshold(&h, &p).unwrap();
        assert!(th > 51.0 / 256.0 && th <= 204.0 / 256.0);
    }

    #[test]
    fn large_nu_matches_otsu_on_spikes() {
        let h = spikes(&[(51, 500), (204, 500)]);
        let p = GhtParams { nu: 1e30, tau: 2.5e-5, kappa: 0.0, omega: 0.5 };
        assert_eq!(ght_split(&h, &p).unwrap(), otsu_split(&h).unwrap());
    }

    #[test]
    fn single_bin_is_degenerate() {
        let h = spikes(&[(100, 42)]);
        assert!(matches!(ght_split(&h, &GhtParams::for_pixels(42)), Err(Error::DegenerateHistogram)));
        assert!(matches!(otsu_split(&h), Err(Error::DegenerateHistogram)));
        assert!(matches!(met_split(&h), Err(Error::DegenerateHistogram)));
    }

    #[test]
    fn otsu_equal_spikes_lowest() {
        assert_eq!(otsu_split(&spikes(&[(50, 10), (200, 10)])).unwrap(), 50);
    }

    #[test]
    fn otsu_uniform_midpoint() {
        assert_eq!(otsu_split(&[7u64; BINS]).unwrap(), 127);
    }

    #[test]
    fn otsu_adjacent_bins() {
        assert_eq!(otsu_split(&spikes(&[(10, 3), (11, 5)])).unwrap(), 10);
    }

    #[test]
    fn histogram_binning() {
        assert_eq!(score_bin(0.0), 0);
        assert_eq!(score_bin(1.0), 255);
        assert_eq!(score_bin(0.5), 128);
        let map = ScoreMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let h = score_histogram(&map);
        assert_eq!((h[0], h[255]), (1, 1));
    }

    #[test]
    fn fills_interior_hole() {
        let m = mask_from(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        let f = fill_holes(&m);
        assert!(f.get(2, 2));
        assert_eq!(f.count(), 9);
    }

    #[test]
    fn c_shape_unchanged() {
        let m = mask_from(&[".....", ".###.", ".#...", ".###.", "....."]);
        assert_eq!(fill_holes(&m), m);
    }

    #[test]
    fn empty_mask_stays_empty() {
        let m = LesionMask::empty(6, 4);
        assert_eq!(fill_holes(&m), m);
        assert!(matches!(select_component(&m), Err(Error::EmptyMask)));
    }

    #[test]
    fn centred_block_wins() {
        let mut m = LesionMask::empty(200, 200);
        for r in 75..125 {
            for c in 75..125 {
                m.set(r, c, true);
            }
        }
        for r in 0..10 {
            for c in 0..10 {
                m.set(r, c, true);
            }
        }
        let s = select_component(&m).unwrap();
        assert_eq!(s.count(), 2500);
        assert!(s.get(100, 100) && !s.get(0, 0));
    }

    #[test]
    fn single_component_unchanged() {
        let m = mask_from(&["......", ".##...", ".###..", "......"]);
        assert_eq!(select_component(&m).unwrap(), m);
    }

    #[test]
    fn mirror_blocks_tie_to_first() {
        // 3x3 blocks at mirrored columns of a 20x20 image
        let m = LesionMask::from_fn(20, 20, |r, c| (8..11).contains(&r) && ((2..5).contains(&c) || (15..18).contains(&c)));
        let (_, scores) = component_scores(&m);
        assert_eq!(scores.len(), 2);
        // direct Gaussian sum for one block
        let sigma: f64 = 10.0;
        let block: f64 = (8..11)
            .flat_map(|r| (2..5).map(move |c| (r, c)))
            .map(|(r, c): (i32, i32)| {
                let (dr, dc) = (r as f64 - 9.5, c as f64 - 9.5);
                (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
            })
            .sum();
        assert!((scores[0].1 - block).abs() < 1e-12 && (scores[1].1 - block).abs() < 1e-12);
        let s = select_component(&m).unwrap();
        assert!(s.get(9, 3) && !s.get(9, 16));
    }

    #[test]
    fn finalize_falls_back_on_flat_map() {
        let m = finalize(&ScoreMap::constant(8, 8, 0.7), &GhtParams::for_pixels(64)).unwrap();
        assert_eq!(m.count(), 64);
        assert!(matches!(finalize(&ScoreMap::constant(8, 8, 0.2), &GhtParams::for_pixels(64)), Err(Error::EmptyMask)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn histogram() -> impl Strategy<Value = Histogram> {
            proptest::collection::vec(0u64..1000, BINS).prop_map(|v| {
                let mut h = [0u64; BINS];
                h.copy_from_slice(&v);
                h[0] += 1;
                h[255] += 1;
                h
            })
        }

        fn mask() -> impl Strategy<Value = LesionMask> {
            (2usize..12, 2usize..12)
                .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<bool>(), w * h)))
                .prop_map(|(w, h, d)| LesionMask::from_vec(w, h, d).unwrap())
        }

        proptest! {
            #[test]
            fn huge_nu_is_otsu(h in histogram()) {
                let p = GhtParams { nu: 1e30, tau: 2.5e-5, kappa: 0.0, omega: 0.5 };
                prop_assert_eq!(ght_split(&h, &p).unwrap(), otsu_split(&h).unwrap());
            }

            #[test]
            fn zero_prior_is_met(h in histogram()) {
                let p = GhtParams { nu: 0.0, tau: 0.0, kappa: 0.0, omega: 0.5 };
                prop_assert_eq!(ght_split(&h, &p).unwrap(), met_split(&h).unwrap());
            }

            #[test]
            fn fill_holes_idempotent_and_growing(m in mask()) {
                let f = fill_holes(&m);
                prop_assert_eq!(fill_holes(&f), f.clone());
                prop_assert!(m.data().iter().zip(f.data()).all(|(&a, &b)| !a || b));
            }

            #[test]
            fn selection_is_one_connected_subset(m in mask()) {
                match select_component(&m) {
                    Ok(s) => {
                        prop_assert!(m.data().iter().zip(s.data()).all(|(&a, &b)| a || !b));
                        let (_, comps) = component_scores(&s);
                        prop_assert_eq!(comps.len(), 1);
                    }
                    Err(Error::EmptyMask) => prop_assert!(m.is_all_false()),
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }
    }
}

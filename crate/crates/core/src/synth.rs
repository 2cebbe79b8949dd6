//! Synthetic dermoscopy-like images with known lesion masks.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{save_png, LesionMask, RgbImage};

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    /// (row, col) in pixels.
    pub center: [f64; 2],
    /// Semi-axes along the rotated column and row directions.
    pub axes: [f64; 2],
    /// Radians, counter-clockwise.
    pub rotation: f64,
}

impl Ellipse {
    /// Normalized radius: below 1 strictly inside.
    pub fn radius(&self, row: f64, col: f64) -> f64 {
        let (dy, dx) = (row - self.center[0], col - self.center[1]);
        let (s, c) = self.rotation.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        ((u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2)).sqrt()
    }

    /// Half extents of the bounding box as (rows, cols).
    pub fn half_extent(&self) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let [a, b] = self.axes;
        [(a * s).hypot(b * c), (a * c).hypot(b * s)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub lesion: Ellipse,
    /// Offset added to the background inside each nested subregion,
    /// outermost first. Subregion `i` has axes scaled by `(n - i) / n`.
    pub offsets: Vec<f64>,
    pub background: [f64; 3],
    pub noise_sigma: f64,
    /// Fractional darkening at the farthest corner.
    pub vignette: f64,
    pub hairs: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("synthetic image must be non-empty".into()));
        }
        if !(1..=4).contains(&self.offsets.len()) {
            return Err(Error::Config("1 to 4 subregions required".into()));
        }
        let [er, ec] = self.lesion.half_extent();
        let [cr, cc] = self.lesion.center;
        if cr - er < 0.0 || cc - ec < 0.0 || cr + er > self.height as f64 || cc + ec > self.width as f64 {
            return Err(Error::Config("lesion must lie inside the image".into()));
        }
        Ok(())
    }

    /// Randomized spec: centred-ish ellipse, 1 to 4 subregions, skin tone
    /// with R >= G >= B, and a hair or two in about a fifth of the images.
    pub fn random(seed: u64, width: usize, height: usize, noise_sigma: f64, vignette: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut background: [f64; 3] = [0.0; 3].map(|_: f64| rng.gen_range(0.65..=0.85));
        background.sort_by(|a, b| b.total_cmp(a));
        let short = width.min(height) as f64;
        let axes = [rng.gen_range(0.2..0.32) * short, rng.gen_range(0.16..0.28) * short];
        let center = [
            height as f64 * (0.5 + rng.gen_range(-0.06..0.06)),
            width as f64 * (0.5 + rng.gen_range(-0.06..0.06)),
        ];
        let rotation = rng.gen_range(0.0..PI);
        let n_sub = rng.gen_range(1..=4);
        let mut offsets = vec![-rng.gen_range(0.25..0.35)];
        for _ in 1..n_sub {
            let prev = *offsets.last().expect("non-empty");
            offsets.push(prev - rng.gen_range(0.08..0.12));
        }
        let hairs = if rng.gen_bool(0.2) { rng.gen_range(1..=3) } else { 0 };
        Self {
            width,
            height,
            lesion: Ellipse { center, axes, rotation },
            offsets,
            background,
            noise_sigma,
            vignette,
            hairs,
            seed,
        }
    }
}

/// Renders the image and its ground truth, the pixels strictly inside the
/// outer ellipse.
pub fn generate(spec: &SyntheticSpec) -> Result<(RgbImage, LesionMask)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let n = spec.offsets.len() as f64;
    let (h, w) = (spec.height as f64, spec.width as f64);
    let (mr, mc) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    let max_rho2 = mr * mr + mc * mc;
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut pixels = Vec::with_capacity(spec.width * spec.height);
    for r in 0..spec.height {
        for c in 0..spec.width {
            let rad = spec.lesion.radius(r as f64, c as f64);
            let offset = spec
                .offsets
                .iter()
                .enumerate()
                .rev()
                .find(|(i, _)| rad < (n - *i as f64) / n)
                .map_or(0.0, |(_, &o)| o);
            let fade = if max_rho2 > 0.0 {
                1.0 - spec.vignette * ((r as f64 - mr).powi(2) + (c as f64 - mc).powi(2)) / max_rho2
            } else {
                1.0
            };
            pixels.push(spec.background.map(|b| (b + offset) * fade));
        }
    }
    for _ in 0..spec.hairs {
        draw_hair(&mut pixels, spec.width, spec.height, &mut rng);
    }
    if spec.noise_sigma > 0.0 {
        for p in &mut pixels {
            for v in p.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }
    let img = RgbImage::from_fn(spec.width, spec.height, |r, c| pixels[r * spec.width + c]);
    let gt = LesionMask::from_fn(spec.width, spec.height, |r, c| spec.lesion.radius(r as f64, c as f64) < 1.0);
    Ok((img, gt))
}

/// A dark quadratic curve between two random border-ish points.
fn draw_hair(pixels: &mut [[f64; 3]], w: usize, h: usize, rng: &mut ChaCha8Rng) {
    let (wf, hf) = (w as f64, h as f64);
    let p0 = [rng.gen_range(0.0..hf), rng.gen_range(0.0..wf * 0.2)];
    let p2 = [rng.gen_range(0.0..hf), rng.gen_range(wf * 0.8..wf)];
    let p1 = [rng.gen_range(0.0..hf), rng.gen_range(0.0..wf)];
    let color = rng.gen_range(0.05..0.15);
    let thickness: f64 = rng.gen_range(0.8..1.6);
    let steps = (3.0 * (wf + hf)) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let q = [0, 1].map(|k| (1.0 - t).powi(2) * p0[k] + 2.0 * (1.0 - t) * t * p1[k] + t * t * p2[k]);
        let reach = thickness.ceil() as isize;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (r, c) = (q[0].round() as isize + dr, q[1].round() as isize + dc);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                if ((r as f64 - q[0]).powi(2) + (c as f64 - q[1]).powi(2)).sqrt() <= thickness {
                    pixels[r as usize * w + c as usize] = [color, color * 0.8, color * 0.6];
                }
            }
        }
    }
}

/// Specs for a seeded corpus; image `i` uses seed `seed + i`.
pub fn corpus_specs(n: usize, seed: u64, width: usize, height: usize, noise_sigma: f64, vignette: f64) -> Vec<SyntheticSpec> {
    (0..n)
        .map(|i| SyntheticSpec::random(seed.wrapping_add(i as u64), width, height, noise_sigma, vignette))
        .collect()
}

pub const CORPUS_NOISE: f64 = 0.02;
pub const CORPUS_VIGNETTE: f64 = 0.15;

/// Writes `img_###.png` and `gt_###.png` pairs.
pub fn write_corpus(dir: &Path, n: usize, seed: u64, width: usize, height: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    for (i, spec) in corpus_specs(n, seed, width, height, CORPUS_NOISE, CORPUS_VIGNETTE).iter().enumerate() {
        let (img, gt) = generate(spec)?;
        save_png(&img.to_rgb8(), &dir.join(format!("img_{i:03}.png")))?;
        save_png(&gt.to_luma8(), &dir.join(format!("gt_{i:03}.png")))?;
    }
    Ok(())
}

//! SLIC superpixels in CIELAB + xy space and per-superpixel statistics.

use crate::error::{Error, Result};
use crate::preprocess::neighbors4;
use crate::raster::RgbImage;

pub const COMPACTNESS: f64 = 10.0;
pub const ITERATIONS: usize = 10;

/// Per-pixel superpixel labels with per-superpixel statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLabeling {
    pub width: usize,
    pub height: usize,
    /// Row-major labels in `[0, n_superpixels)`.
    pub labels: Vec<u32>,
    pub n_superpixels: usize,
    /// Mean RGB in `[0, 1]`.
    pub means: Vec<[f64; 3]>,
    /// Mean pixel coordinates as `[row, col]`.
    pub centroids: Vec<[f64; 2]>,
    pub sizes: Vec<usize>,
}

impl SuperpixelLabeling {
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col] as usize
    }
}

/// Computes means, centroids and sizes of an existing label grid.
pub fn superpixel_stats(img: &RgbImage, labels: Vec<u32>) -> Result<SuperpixelLabeling> {
    let (w, h) = (img.width(), img.height());
    if labels.len() != w * h {
        return Err(Error::DimensionMismatch(format!("{} labels for {w}x{h}", labels.len())));
    }
    let n = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut sizes = vec![0usize; n];
    let mut color_sum = vec![[0.0f64; 3]; n];
    let mut pos_sum = vec![[0.0f64; 2]; n];
    for (idx, (&l, p)) in labels.iter().zip(img.pixels()).enumerate() {
        let l = l as usize;
        sizes[l] += 1;
        for k in 0..3 {
            color_sum[l][k] += p[k];
        }
        pos_sum[l][0] += (idx / w) as f64;
        pos_sum[l][1] += (idx % w) as f64;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptySuperpixel(empty));
    }
    let means = color_sum.iter().zip(&sizes).map(|(s, &n)| s.map(|v| v / n as f64)).collect();
    let centroids = pos_sum.iter().zip(&sizes).map(|(s, &n)| s.map(|v| v / n as f64)).collect();
    Ok(SuperpixelLabeling { width: w, height: h, labels, n_superpixels: n, means, centroids, sizes })
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    row: f64,
    col: f64,
}

/// SLIC with compactness 10 and 10 iterations, followed by connectivity
/// enforcement.
pub fn slic_segment(img: &RgbImage, n_target: usize) -> Result<SuperpixelLabeling> {
    let (w, h) = (img.width(), img.height());
    if n_target < 2 {
        return Err(Error::Config(format!("superpixel count must be >= 2, got {n_target}")));
    }
    if n_target > w * h {
        return Err(Error::DegenerateImage(format!("{} pixels for {n_target} superpixels", w * h)));
    }
    let lab: Vec<[f64; 3]> = img.pixels().iter().map(|&p| srgb_to_lab(p)).collect();
    let step = ((w * h) as f64 / n_target as f64).sqrt();
    let nx = ((w as f64 / step).round() as usize).clamp(1, w);
    let ny = ((h as f64 / step).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let r = (((j as f64 + 0.5) * sy) as usize).min(h - 1);
            let c = (((i as f64 + 0.5) * sx) as usize).min(w - 1);
            let (r, c) = lowest_gradient(&lab, w, h, r, c);
            centers.push(Center { lab: lab[r * w + c], row: r as f64, col: c as f64 });
        }
    }

    // Start from the grid cells so every pixel carries a label even if no
    // search window reaches it.
    let mut labels: Vec<u32> = (0..w * h)
        .map(|idx| {
            let j = (((idx / w) as f64 / sy) as usize).min(ny - 1);
            let i = (((idx % w) as f64 / sx) as usize).min(nx - 1);
            (j * nx + i) as u32
        })
        .collect();
    let mut dist = vec![f64::INFINITY; w * h];
    let spatial = (COMPACTNESS / step).powi(2);
    let reach = step.ceil() as isize;

    for _ in 0..ITERATIONS {
        dist.fill(f64::INFINITY);
        for (k, center) in centers.iter().enumerate() {
            let (cr, cc) = (center.row.round() as isize, center.col.round() as isize);
            let r0 = (cr - reach).max(0) as usize;
            let r1 = ((cr + reach) as usize).min(h - 1);
            let c0 = (cc - reach).max(0) as usize;
            let c1 = ((cc + reach) as usize).min(w - 1);
            for r in r0..=r1 {
                let dr = r as f64 - center.row;
                for c in c0..=c1 {
                    let idx = r * w + c;
                    let p = lab[idx];
                    let dl = p[0] - center.lab[0];
                    let da = p[1] - center.lab[1];
                    let db = p[2] - center.lab[2];
                    let dc = c as f64 - center.col;
                    let d = dl * dl + da * da + db * db + (dr * dr + dc * dc) * spatial;
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = k as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (idx, &l) in labels.iter().enumerate() {
            let a = &mut acc[l as usize];
            let p = lab[idx];
            a[0] += p[0];
            a[1] += p[1];
            a[2] += p[2];
            a[3] += (idx / w) as f64;
            a[4] += (idx % w) as f64;
            a[5] += 1.0;
        }
        for (center, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                center.lab = [a[0] / a[5], a[1] / a[5], a[2] / a[5]];
                center.row = a[3] / a[5];
                center.col = a[4] / a[5];
            }
        }
    }

    let labels = enforce_connectivity(&labels, w, h, step * step / 4.0);
    superpixel_stats(img, labels)
}

fn lowest_gradient(lab: &[[f64; 3]], w: usize, h: usize, r: usize, c: usize) -> (usize, usize) {
    let grad = |r: usize, c: usize| -> f64 {
        let at = |r: usize, c: usize| lab[r * w + c];
        let (up, down) = (at(r.saturating_sub(1), c), at((r + 1).min(h - 1), c));
        let (left, right) = (at(r, c.saturating_sub(1)), at(r, (c + 1).min(w - 1)));
        (0..3).map(|k| (down[k] - up[k]).powi(2) + (right[k] - left[k]).powi(2)).sum()
    };
    let mut best = (r, c);
    let mut best_g = grad(r, c);
    for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
        for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
            let g = grad(nr, nc);
            if g < best_g {
                best_g = g;
                best = (nr, nc);
            }
        }
    }
    best
}

/// Splits every label into its 4-connected components; components smaller
/// than `min_size` join the largest adjacent superpixel. Output labels are
/// compact and numbered in scan order.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: f64) -> Vec<u32> {
    let (comp, comp_sizes) = label_components(w, h, |a, b| labels[a] == labels[b]);
    let n_comp = comp_sizes.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_comp];
    for r in 0..h {
        for c in 0..w {
            let a = comp[r * w + c];
            if c + 1 < w {
                let b = comp[r * w + c + 1];
                if a != b {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
            if r + 1 < h {
                let b = comp[(r + 1) * w + c];
                if a != b {
                    adjacency[a].push(b);
                    adjacency[b].push(a);
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }

    let mut parent: Vec<usize> = (0..n_comp).collect();
    let mut group_size = comp_sizes.clone();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for small in 0..n_comp {
        let root = find(&mut parent, small);
        if root != small || (group_size[root] as f64) >= min_size {
            continue;
        }
        let mut best: Option<usize> = None;
        for &nb in &adjacency[small] {
            let nr = find(&mut parent, nb);
            if nr == root {
                continue;
            }
            best = match best {
                Some(b) if group_size[b] > group_size[nr] || (group_size[b] == group_size[nr] && b < nr) => Some(b),
                _ => Some(nr),
            };
        }
        if let Some(target) = best {
            parent[root] = target;
            group_size[target] += group_size[root];
        }
    }

    let mut remap = vec![u32::MAX; n_comp];
    let mut next = 0u32;
    comp.iter()
        .map(|&c| {
            let root = find(&mut parent, c);
            if remap[root] == u32::MAX {
                remap[root] = next;
                next += 1;
            }
            remap[root]
        })
        .collect()
}

/// 4-connected component labeling where `same(a, b)` decides whether two
/// adjacent pixel indices belong together. Components are numbered in scan
/// order of their first pixel.
pub(crate) fn label_components(w: usize, h: usize, same: impl Fn(usize, usize) -> bool) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[start] = id;
        let mut size = 0;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            size += 1;
            for (nr, nc) in neighbors4(idx / w, idx % w, w, h) {
                let nidx = nr * w + nc;
                if comp[nidx] == usize::MAX && same(idx, nidx) {
                    comp[nidx] = id;
                    stack.push(nidx);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// sRGB in `[0,1]` to CIELAB under D65.
pub fn srgb_to_lab(p: [f64; 3]) -> [f64; 3] {
    let lin = p.map(|v| if v <= 0.04045 { v / 12.92 } else { ((v + 0.055) / 1.055).powf(2.4) });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

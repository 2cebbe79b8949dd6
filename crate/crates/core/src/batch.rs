//! Directory-level segmentation, output files and evaluation reports.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, write_csv, MetricsReport, RowStatus};
use crate::pipeline::{segment, ImageSegmentation};
use crate::preprocess::{load_image, neighbors4};
use crate::raster::{save_png, LesionMask, RgbImage};

pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];
const STEM_SUFFIXES: [&str; 5] = ["_segmentation", "_lesion", "_mask", "_gt", "_score"];
const STEM_PREFIXES: [&str; 2] = ["gt_", "img_"];
pub const OVERLAY_COLOR: [u8; 3] = [0, 255, 0];
pub const REPORT_NAME: &str = "metrics.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Image files in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Key used to pair images, predictions and ground truth: lowercase stem
/// with mask-style suffixes and `gt_`/`img_` prefixes removed, so
/// `ISIC_001_segmentation`, `img_007_mask` and `gt_007` pair up.
pub fn match_key(path: &Path) -> String {
    let mut key = file_stem(path).to_ascii_lowercase();
    while let Some(s) = STEM_SUFFIXES.iter().find(|s| key.len() > s.len() && key.ends_with(*s)) {
        key.truncate(key.len() - s.len());
    }
    if let Some(p) = STEM_PREFIXES.iter().find(|p| key.len() > p.len() && key.starts_with(*p)) {
        key.drain(..p.len());
    }
    key
}

fn index_by_key(paths: Vec<PathBuf>) -> BTreeMap<String, PathBuf> {
    let mut map = BTreeMap::new();
    for p in paths {
        map.entry(match_key(&p)).or_insert(p);
    }
    map
}

/// Reads a mask image; pixels brighter than 127 are lesion.
pub fn load_mask(path: &Path) -> Result<LesionMask> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(LesionMask::from_luma8(&img.to_luma8()))
}

/// `img` with the mask boundary painted green, one pixel wide.
pub fn overlay(img: &RgbImage, mask: &LesionMask) -> Result<image::RgbImage> {
    if (img.width(), img.height()) != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut out = img.to_rgb8();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let on_edge = r == 0 || c == 0 || r + 1 == h || c + 1 == w || neighbors4(r, c, w, h).any(|(nr, nc)| !mask.get(nr, nc));
            if on_edge {
                out.put_pixel(c as u32, r as u32, image::Rgb(OVERLAY_COLOR));
            }
        }
    }
    Ok(out)
}

/// Writes `<stem>_mask.png`, `<stem>_score.png` and `<stem>_overlay.png`.
pub fn write_outputs(out_dir: &Path, stem: &str, raw: &RgbImage, seg: &ImageSegmentation) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    save_png(&seg.mask_original.to_luma8(), &out_dir.join(format!("{stem}_mask.png")))?;
    save_png(&seg.output.score.to_luma8(), &out_dir.join(format!("{stem}_score.png")))?;
    save_png(&overlay(raw, &seg.mask_original)?, &out_dir.join(format!("{stem}_overlay.png")))?;
    Ok(())
}

pub fn write_report(path: &Path, rows: &[(String, RowStatus)]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_csv(BufWriter::new(file), rows).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub n_images: usize,
    pub failures: usize,
    /// One row per image when ground truth was supplied.
    pub rows: Vec<(String, RowStatus)>,
    pub mean: Option<MetricsReport>,
}

fn summarize(n_images: usize, failures: usize, mut rows: Vec<(String, RowStatus)>) -> BatchSummary {
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let scored: Vec<MetricsReport> = rows
        .iter()
        .filter_map(|(_, s)| match s {
            RowStatus::Scored(r) => Some(*r),
            RowStatus::Skipped(_) => None,
        })
        .collect();
    BatchSummary { n_images, failures, mean: MetricsReport::mean(&scored), rows }
}

fn process_one(path: &Path, gt: Option<&Path>, out_dir: &Path, cfg: &PipelineConfig) -> Result<Option<MetricsReport>> {
    let raw = load_image(path)?;
    let seg = segment(&raw, cfg)?;
    write_outputs(out_dir, &file_stem(path), &raw, &seg)?;
    gt.map(|g| evaluate(&seg.mask_original, &load_mask(g)?)).transpose()
}

/// Segments every image in `input_dir` on a pool of `jobs` threads (all
/// cores when `None`). With `gt_dir`, writes `metrics.csv` into `out_dir`.
/// Failed images are logged and reported as `error` rows.
pub fn run_batch(
    input_dir: &Path,
    gt_dir: Option<&Path>,
    out_dir: &Path,
    cfg: &PipelineConfig,
    jobs: Option<usize>,
) -> Result<BatchSummary> {
    cfg.validate()?;
    let images = list_images(input_dir)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if images.is_empty() {
        log::warn!("no images found in {}", input_dir.display());
    }
    let gt_index = gt_dir.map(|d| list_images(d).map(index_by_key)).transpose()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<(String, Result<Option<MetricsReport>>)> = pool.install(|| {
        images
            .par_iter()
            .map(|path| {
                let gt = gt_index.as_ref().and_then(|idx| idx.get(&match_key(path)));
                (file_stem(path), process_one(path, gt.map(PathBuf::as_path), out_dir, cfg))
            })
            .collect()
    });
    let mut failures = 0;
    let mut rows = Vec::new();
    for (stem, outcome) in outcomes {
        let status = match outcome {
            Ok(Some(m)) => RowStatus::Scored(m),
            Ok(None) if gt_index.is_some() => {
                log::warn!("{stem}: no ground truth");
                RowStatus::Skipped("no_gt".into())
            }
            Ok(None) => continue,
            Err(e) => {
                log::error!("{stem}: {e}");
                failures += 1;
                RowStatus::Skipped("error".into())
            }
        };
        if gt_index.is_some() {
            rows.push((stem, status));
        }
    }
    let summary = summarize(images.len(), failures, rows);
    if gt_dir.is_some() {
        write_report(&out_dir.join(REPORT_NAME), &summary.rows)?;
    }
    Ok(summary)
}

/// Scores existing prediction masks against ground truth and writes the
/// report to `out_csv`.
pub fn eval_dirs(pred_dir: &Path, gt_dir: &Path, out_csv: &Path) -> Result<BatchSummary> {
    let preds = list_images(pred_dir)?;
    let gt_index = index_by_key(list_images(gt_dir)?);
    let rows: Vec<(String, RowStatus)> = preds
        .par_iter()
        .map(|p| {
            let stem = file_stem(p);
            let status = match gt_index.get(&match_key(p)) {
                None => RowStatus::Skipped("no_gt".into()),
                Some(g) => match load_mask(p).and_then(|pm| evaluate(&pm, &load_mask(g)?)) {
                    Ok(m) => RowStatus::Scored(m),
                    Err(e) => {
                        log::error!("{stem}: {e}");
                        RowStatus::Skipped("error".into())
                    }
                },
            };
            (stem, status)
        })
        .collect();
    let failures = rows.iter().filter(|(_, s)| *s == RowStatus::Skipped("error".into())).count();
    let summary = summarize(preds.len(), failures, rows);
    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_report(out_csv, &summary.rows)?;
    Ok(summary)
}

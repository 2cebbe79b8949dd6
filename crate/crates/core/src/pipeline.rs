//! Single- and multi-scale segmentation of a preprocessed image.

use rayon::prelude::*;

use crate::bisection::{select_channel, BisectionResult};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::graph::{build_graph_connected, knn_sparsify};
use crate::multiscale::{integrate, ScaleResult};
use crate::outlier::{fit_forest_with, score_map};
use crate::postprocess::finalize;
use crate::preprocess::prepare;
use crate::raster::{LesionMask, RgbImage, ScoreMap};
use crate::se::{minimize_with, Partition};
use crate::superpixel::{slic_segment, SuperpixelLabeling};

/// Between-class variance at or below which the regions are treated as one
/// intensity level.
pub const MIN_SEPARATION: f64 = 1e-12;

/// Everything produced at one superpixel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleOutputBundle {
    pub scale: usize,
    pub labeling: SuperpixelLabeling,
    pub partition: Partition,
    pub bisection: Option<BisectionResult>,
    /// Superpixels of the brighter regions, used to train the forest.
    pub healthy: Vec<usize>,
    pub score: Option<ScoreMap>,
    pub sigma2_b: f64,
    pub degenerate: bool,
}

impl ScaleOutputBundle {
    /// Pixels whose superpixel falls in a darker region.
    pub fn lesion_superpixel_mask(&self) -> LesionMask {
        let mut is_lesion = vec![false; self.labeling.n_superpixels];
        if let Some(b) = &self.bisection {
            for &region in &b.lesion_regions {
                for &node in &self.partition.modules()[region] {
                    is_lesion[node] = true;
                }
            }
        }
        let data = self.labeling.labels.iter().map(|&l| is_lesion[l as usize]).collect();
        LesionMask::from_vec(self.labeling.width, self.labeling.height, data).expect("labeling shape")
    }

    pub fn to_scale_result(&self) -> ScaleResult {
        match (&self.score, self.degenerate) {
            (Some(map), false) => ScaleResult::new(self.scale, map.clone(), self.sigma2_b),
            _ => ScaleResult::degenerate(self.scale),
        }
    }

    fn degenerate(self, reason: &str) -> Self {
        log::debug!("scale {} degenerate: {reason}", self.scale);
        Self { bisection: None, healthy: Vec::new(), score: None, sigma2_b: 0.0, degenerate: true, ..self }
    }
}

/// Superpixels, graph, entropy partition, bisection and outlier scores at
/// one scale. A scale with a single region, identical region means or
/// fewer than two healthy superpixels comes back degenerate.
pub fn run_single_scale(img: &RgbImage, scale: usize, cfg: &PipelineConfig) -> Result<ScaleOutputBundle> {
    let labeling = slic_segment(img, scale)?;
    let graph = knn_sparsify(&build_graph_connected(&labeling, cfg.r, cfg.local_scale())?, cfg.knn_k);
    let partition = minimize_with(&graph, cfg.refine_max_iters, cfg.refine_scope)?;
    let bundle = ScaleOutputBundle {
        scale,
        labeling,
        partition,
        bisection: None,
        healthy: Vec::new(),
        score: None,
        sigma2_b: 0.0,
        degenerate: false,
    };
    let bisection = match select_channel(img, &bundle.labeling, &bundle.partition) {
        Ok(b) => b,
        Err(Error::SingleRegion) => return Ok(bundle.degenerate("single region")),
        Err(e) => return Err(e),
    };
    if !(bisection.sigma2_b > MIN_SEPARATION) {
        return Ok(bundle.degenerate("regions share one mean intensity"));
    }
    let mut healthy: Vec<usize> = bisection
        .healthy_regions
        .iter()
        .flat_map(|&region| bundle.partition.modules()[region].iter().copied())
        .collect();
    healthy.sort_unstable();
    let features: Vec<[f64; 3]> = healthy.iter().map(|&i| bundle.labeling.means[i]).collect();
    let forest = match fit_forest_with(&features, &cfg.forest_options(scale)) {
        Ok(f) => f,
        Err(Error::TooFewSamples(n)) => return Ok(bundle.degenerate(&format!("{n} healthy superpixels"))),
        Err(e) => return Err(e),
    };
    let score = score_map(&forest, &bundle.labeling);
    Ok(ScaleOutputBundle {
        sigma2_b: bisection.sigma2_b,
        bisection: Some(bisection),
        healthy,
        score: Some(score),
        ..bundle
    })
}

/// Fused score map and final mask at the preprocessed resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationOutput {
    /// All zeros when every scale was degenerate.
    pub score: ScoreMap,
    pub mask: LesionMask,
    pub bundles: Vec<ScaleOutputBundle>,
    pub warnings: Vec<String>,
}

/// Runs the given scales in parallel, fuses their score maps and
/// post-processes the result. Failures that leave nothing to segment yield
/// an all-background mask and a warning.
pub fn run_scales(img: &RgbImage, scales: &[usize], cfg: &PipelineConfig) -> Result<SegmentationOutput> {
    if scales.is_empty() {
        return Err(Error::Config("no superpixel scales given".into()));
    }
    let (w, h) = (img.width(), img.height());
    let runs: Vec<(usize, Result<ScaleOutputBundle>)> =
        scales.par_iter().map(|&s| (s, run_single_scale(img, s, cfg))).collect();
    let mut warnings = Vec::new();
    let mut bundles = Vec::new();
    for (scale, run) in runs {
        match run {
            Ok(b) => bundles.push(b),
            Err(e) => warnings.push(format!("scale {scale} failed: {e}")),
        }
    }
    let results: Vec<ScaleResult> = bundles.iter().map(ScaleOutputBundle::to_scale_result).collect();
    let score = match integrate(&results) {
        Ok(s) => s,
        Err(Error::AllScalesDegenerate) => {
            warnings.push("all scales degenerate, reporting background only".into());
            let out = SegmentationOutput { score: ScoreMap::constant(w, h, 0.0), mask: LesionMask::empty(w, h), bundles, warnings };
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let mask = match finalize(&score, &cfg.ght_params(w * h)) {
        Ok(m) => m,
        Err(Error::EmptyMask) => {
            warnings.push("no lesion component after thresholding".into());
            LesionMask::empty(w, h)
        }
        Err(e) => return Err(e),
    };
    for msg in &warnings {
        log::warn!("{msg}");
    }
    Ok(SegmentationOutput { score, mask, bundles, warnings })
}

/// Fuses all `ms_scales`.
pub fn run_multi_scale(img: &RgbImage, cfg: &PipelineConfig) -> Result<SegmentationOutput> {
    run_scales(img, &cfg.ms_scales, cfg)
}

/// Same post-processing applied to the single `ss_scale` map.
pub fn run_single_scale_segmentation(img: &RgbImage, cfg: &PipelineConfig) -> Result<SegmentationOutput> {
    run_scales(img, &[cfg.ss_scale], cfg)
}

/// Full run on a raw image: preprocessing, the configured mode, and the
/// mask resized back to the input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSegmentation {
    pub prepared: RgbImage,
    pub output: SegmentationOutput,
    pub mask_original: LesionMask,
}

pub fn segment(raw: &RgbImage, cfg: &PipelineConfig) -> Result<ImageSegmentation> {
    cfg.validate()?;
    let prepared = prepare(raw, cfg)?;
    let output = run_scales(&prepared, &cfg.scales(), cfg)?;
    let mask_original = output.mask.resize_nearest(raw.width(), raw.height());
    Ok(ImageSegmentation { prepared, output, mask_original })
}

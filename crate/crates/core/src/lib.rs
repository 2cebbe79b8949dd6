//! Unsupervised skin lesion segmentation.
//!
//! The pipeline groups SLIC superpixels into homogeneous regions by
//! minimizing the two-dimensional structural entropy of a superpixel
//! similarity graph, splits the regions into lesion and healthy skin by
//! between-class variance, and fuses isolation-forest outlier scores from
//! several superpixel scales into one score map that is thresholded into a
//! binary lesion mask.
//!
//! ```no_run
//! use sled_core::{config::PipelineConfig, pipeline, preprocess};
//!
//! let img = preprocess::load_image("lesion.jpg").unwrap();
//! let cfg = PipelineConfig::default();
//! let prepared = preprocess::prepare(&img, &cfg).unwrap();
//! let out = pipeline::run_multi_scale(&prepared, &cfg).unwrap();
//! println!("{} lesion pixels", out.mask.count());
//! ```

pub mod batch;
pub mod bisection;
pub mod config;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod multiscale;
pub mod outlier;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod raster;
pub mod se;
pub mod superpixel;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{ArtifactMask, BinaryMask, LesionMask, RgbImage, ScoreMap};

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("cannot encode image: {0}")]
    Encode(String),
    #[error("degenerate image: {0}")]
    DegenerateImage(String),
    #[error("superpixel label {0} has no pixels")]
    EmptySuperpixel(usize),
    #[error("graph node {0} has no incident edge")]
    DisconnectedNode(usize),
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("partition has a single region, nothing to bisect")]
    SingleRegion,
    #[error("isolation forest needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("every scale was degenerate")]
    AllScalesDegenerate,
    #[error("histogram has fewer than two occupied bins")]
    DegenerateHistogram,
    #[error("mask has no lesion component")]
    EmptyMask,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

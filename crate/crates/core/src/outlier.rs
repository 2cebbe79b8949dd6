//! Isolation forest over mean superpixel colors.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::ScoreMap;
use crate::superpixel::SuperpixelLabeling;

pub const EULER_GAMMA: f64 = 0.577_215_664_9;
pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;

pub type Feature = [f64; 3];

/// Average path length of an unsuccessful search in a binary search tree
/// of `n` points.
pub fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split { attr: usize, value: f64, left: usize, right: usize },
    Leaf { size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
    height_limit: usize,
}

impl IsolationTree {
    /// A tree consisting of a single leaf that holds `size` points.
    pub fn leaf(size: usize) -> Self {
        Self { nodes: vec![Node::Leaf { size }], height_limit: 0 }
    }

    /// Internal node sending `x[attr] < value` to `left`, the rest to `right`.
    pub fn split(attr: usize, value: f64, left: IsolationTree, right: IsolationTree) -> Self {
        assert!(attr < 3, "attribute index out of range");
        let mut nodes = vec![Node::Leaf { size: 0 }];
        let l = graft(&mut nodes, left.nodes);
        let r = graft(&mut nodes, right.nodes);
        nodes[0] = Node::Split { attr, value, left: l, right: r };
        let height_limit = 1 + left.height_limit.max(right.height_limit);
        Self { nodes, height_limit }
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    pub fn is_single_leaf(&self) -> bool {
        matches!(self.nodes[..], [Node::Leaf { .. }])
    }

    /// `(depth, size)` of every leaf.
    pub fn leaves(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, depth)) = stack.pop() {
            match self.nodes[idx] {
                Node::Leaf { size } => out.push((depth, size)),
                Node::Split { left, right, .. } => {
                    stack.push((right, depth + 1));
                    stack.push((left, depth + 1));
                }
            }
        }
        out
    }

    /// Depth of the leaf reached by `x` plus the expected depth of the
    /// subtree that was not grown below it.
    pub fn path_length(&self, x: &Feature) -> f64 {
        let mut idx = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[idx] {
                Node::Leaf { size } => return depth as f64 + c_factor(size),
                Node::Split { attr, value, left, right } => {
                    idx = if x[attr] < value { left } else { right };
                    depth += 1;
                }
            }
        }
    }

    fn grow(points: &[Feature], height_limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut nodes = Vec::new();
        let idx: Vec<usize> = (0..points.len()).collect();
        grow_node(points, idx, 0, height_limit, rng, &mut nodes);
        Self { nodes, height_limit }
    }
}

fn graft(nodes: &mut Vec<Node>, sub: Vec<Node>) -> usize {
    let offset = nodes.len();
    nodes.extend(sub.into_iter().map(|n| match n {
        Node::Split { attr, value, left, right } => {
            Node::Split { attr, value, left: left + offset, right: right + offset }
        }
        leaf => leaf,
    }));
    offset
}

fn grow_node(
    points: &[Feature],
    idx: Vec<usize>,
    depth: usize,
    height_limit: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let me = nodes.len();
    nodes.push(Node::Leaf { size: idx.len() });
    if depth >= height_limit || idx.len() <= 1 {
        return me;
    }
    let spread: Vec<(usize, f64, f64)> = (0..3)
        .filter_map(|a| {
            let (lo, hi) = idx
                .iter()
                .map(|&i| points[i][a])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            // needs a representable value strictly between the extremes
            let mid = lo + 0.5 * (hi - lo);
            (lo < mid && mid < hi).then_some((a, lo, hi))
        })
        .collect();
    if spread.is_empty() {
        return me;
    }
    let (attr, lo, hi) = spread[rng.gen_range(0..spread.len())];
    let mut value = rng.gen_range(lo..hi);
    while value <= lo {
        value = rng.gen_range(lo..hi);
    }
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| points[i][attr] < value);
    let left = grow_node(points, left_idx, depth + 1, height_limit, rng, nodes);
    let right = grow_node(points, right_idx, depth + 1, height_limit, rng, nodes);
    nodes[me] = Node::Split { attr, value, left, right };
    me
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOptions {
    pub n_trees: usize,
    /// Points drawn per tree; `None` grows every tree on all points.
    pub subsample: Option<usize>,
    pub seed: u64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self { n_trees: DEFAULT_TREES, subsample: Some(DEFAULT_SUBSAMPLE), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    psi: usize,
    c_psi: f64,
}

impl IsolationForest {
    /// Wraps prebuilt trees; scores are normalized by `c(psi)`.
    pub fn from_trees(trees: Vec<IsolationTree>, psi: usize) -> Self {
        assert!(!trees.is_empty(), "forest needs at least one tree");
        Self { trees, psi, c_psi: c_factor(psi) }
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn mean_path_length(&self, x: &Feature) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// `2^(-E(h)/c(psi))`, in `(0, 1]`.
    pub fn score(&self, x: &Feature) -> f64 {
        (-self.mean_path_length(x) / self.c_psi).exp2()
    }
}

/// Fits `n_trees` trees on subsamples of at most 256 points each.
pub fn fit_forest(features: &[Feature], n_trees: usize, seed: u64) -> Result<IsolationForest> {
    fit_forest_with(features, &ForestOptions { n_trees, seed, ..Default::default() })
}

/// Each tree draws its own subsample from a ChaCha stream keyed by the tree
/// index, so the forest does not depend on how trees are scheduled.
pub fn fit_forest_with(features: &[Feature], opts: &ForestOptions) -> Result<IsolationForest> {
    if features.len() < 2 {
        return Err(Error::TooFewSamples(features.len()));
    }
    if opts.n_trees == 0 {
        return Err(Error::Config("isolation forest needs at least one tree".into()));
    }
    let psi = features.len();
    let sub = opts.subsample.map_or(psi, |s| s.clamp(2, psi));
    let height_limit = (sub as f64).log2().ceil() as usize;
    let trees = (0..opts.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(t as u64);
            let points: Vec<Feature> = if sub == psi {
                features.to_vec()
            } else {
                let mut chosen = sample(&mut rng, psi, sub).into_vec();
                chosen.sort_unstable();
                chosen.into_iter().map(|i| features[i]).collect()
            };
            IsolationTree::grow(&points, height_limit, &mut rng)
        })
        .collect();
    Ok(IsolationForest { trees, psi, c_psi: c_factor(psi) })
}

/// Paints every pixel with the score of its superpixel's mean color.
pub fn score_map(forest: &IsolationForest, sp: &SuperpixelLabeling) -> ScoreMap {
    let per_sp: Vec<f64> = sp.means.par_iter().map(|m| forest.score(m)).collect();
    let data = sp.labels.iter().map(|&l| per_sp[l as usize]).collect();
    ScoreMap::new(sp.width, sp.height, data).expect("scores lie in (0,1]")
}

//! Superpixel similarity graph: spatially thresholded, locally scaled,
//! K-NN sparsified.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::superpixel::SuperpixelLabeling;

/// How the per-node scale in the Gaussian affinity is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalScale {
    /// Color distance to the k-th nearest spatially connectable node,
    /// clamped below by 1.0.
    Neighbor(usize),
    /// The same scale for every node.
    Fixed(f64),
}

/// Undirected weighted graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    degrees: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SuperpixelGraph {
    /// Builds a graph from `(i, j, weight)` triples. Endpoints are stored with
    /// `i < j`; self-loops and non-positive weights are rejected.
    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut stored = Vec::new();
        for (i, j, w) in edges {
            if i == j || i >= n_nodes || j >= n_nodes {
                return Err(Error::Config(format!("invalid edge ({i}, {j}) for {n_nodes} nodes")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("edge ({i}, {j}) has weight {w}")));
            }
            stored.push((i.min(j), i.max(j), w));
        }
        stored.sort_by_key(|e| (e.0, e.1));
        if let Some(d) = stored.windows(2).find(|p| (p[0].0, p[0].1) == (p[1].0, p[1].1)) {
            return Err(Error::Config(format!("duplicate edge ({}, {})", d[0].0, d[0].1)));
        }
        let mut degrees = vec![0.0; n_nodes];
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(i, j, w) in &stored {
            degrees[i] += w;
            degrees[j] += w;
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        Ok(Self { n_nodes, edges: stored, degrees, adjacency })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.degrees[node]
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Sum of all degrees.
    pub fn volume(&self) -> f64 {
        self.degrees.iter().sum()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i].iter().find(|&&(n, _)| n == j).map(|&(_, w)| w)
    }

    pub fn isolated_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes).filter(|&i| self.adjacency[i].is_empty())
    }

    /// One `i j weight` line per edge.
    pub fn write_edge_list(&self, mut out: impl Write) -> io::Result<()> {
        for &(i, j, w) in &self.edges {
            writeln!(out, "{i} {j} {w}")?;
        }
        Ok(())
    }
}

fn spatially_close(sp: &SuperpixelLabeling, r: f64, i: usize, j: usize) -> bool {
    let (a, b) = (sp.centroids[i], sp.centroids[j]);
    (a[0] - b[0]).abs() < r * sp.height as f64 && (a[1] - b[1]).abs() < r * sp.width as f64
}

/// Euclidean distance between mean colors on the 0..255 scale.
fn color_distance(sp: &SuperpixelLabeling, i: usize, j: usize) -> f64 {
    let (a, b) = (sp.means[i], sp.means[j]);
    (0..3).map(|k| (255.0 * (a[k] - b[k])).powi(2)).sum::<f64>().sqrt()
}

/// Gaussian affinity with per-node scales. Underflow is floored to the
/// smallest normal `f64` so that every spatial pair keeps a positive weight.
pub fn affinity(distance: f64, sigma_i: f64, sigma_j: f64) -> f64 {
    (-(distance * distance) / (sigma_i * sigma_j)).exp().max(f64::MIN_POSITIVE)
}

/// Per-node scales for the affinity.
pub fn local_scales(sp: &SuperpixelLabeling, r: f64, scale: LocalScale) -> Vec<f64> {
    let n = sp.n_superpixels;
    match scale {
        LocalScale::Fixed(s) => vec![s; n],
        LocalScale::Neighbor(k) => (0..n)
            .map(|i| {
                let mut d: Vec<f64> = (0..n)
                    .filter(|&j| j != i && spatially_close(sp, r, i, j))
                    .map(|j| color_distance(sp, i, j))
                    .collect();
                if d.is_empty() {
                    return 1.0;
                }
                d.sort_by(f64::total_cmp);
                d[(k.max(1) - 1).min(d.len() - 1)].max(1.0)
            })
            .collect(),
    }
}

fn dense_graph(sp: &SuperpixelLabeling, r: f64, scale: LocalScale) -> (SuperpixelGraph, Vec<f64>) {
    let sigma = local_scales(sp, r, scale);
    let n = sp.n_superpixels;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if spatially_close(sp, r, i, j) {
                edges.push((i, j, affinity(color_distance(sp, i, j), sigma[i], sigma[j])));
            }
        }
    }
    let g = SuperpixelGraph::from_edges(n, edges).expect("constructed edges are valid");
    (g, sigma)
}

/// Connects superpixels whose centroids differ by less than `r·H` rows and
/// `r·W` columns, weighted by the locally scaled Gaussian of their mean-color
/// distance.
pub fn build_graph(sp: &SuperpixelLabeling, r: f64, scale: LocalScale) -> Result<SuperpixelGraph> {
    check_params(r, scale)?;
    let (g, _) = dense_graph(sp, r, scale);
    let isolated = g.isolated_nodes().next();
    match isolated {
        Some(node) => Err(Error::DisconnectedNode(node)),
        None => Ok(g),
    }
}

/// Like [`build_graph`], but every isolated node is attached to the node with
/// the nearest centroid.
pub fn build_graph_connected(sp: &SuperpixelLabeling, r: f64, scale: LocalScale) -> Result<SuperpixelGraph> {
    check_params(r, scale)?;
    let (g, sigma) = dense_graph(sp, r, scale);
    let isolated: Vec<usize> = g.isolated_nodes().collect();
    if isolated.is_empty() || g.n_nodes() < 2 {
        return Ok(g);
    }
    let mut edges = g.edges.clone();
    for i in isolated {
        let c = sp.centroids[i];
        let nearest = (0..g.n_nodes())
            .filter(|&j| j != i)
            .min_by(|&a, &b| {
                let da = (sp.centroids[a][0] - c[0]).powi(2) + (sp.centroids[a][1] - c[1]).powi(2);
                let db = (sp.centroids[b][0] - c[0]).powi(2) + (sp.centroids[b][1] - c[1]).powi(2);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("at least two nodes");
        let key = (i.min(nearest), i.max(nearest));
        if !edges.iter().any(|e| (e.0, e.1) == key) {
            edges.push((key.0, key.1, affinity(color_distance(sp, i, nearest), sigma[i], sigma[nearest])));
        }
    }
    SuperpixelGraph::from_edges(g.n_nodes(), edges)
}

fn check_params(r: f64, scale: LocalScale) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Config(format!("spatial threshold r must be in (0,1], got {r}")));
    }
    match scale {
        LocalScale::Neighbor(0) => Err(Error::Config("local scale neighbor index must be >= 1".into())),
        LocalScale::Fixed(s) if !(s > 0.0) => Err(Error::Config(format!("fixed scale must be positive, got {s}"))),
        _ => Ok(()),
    }
}

/// Keeps an edge when it is among the `k` heaviest edges of either endpoint.
pub fn knn_sparsify(g: &SuperpixelGraph, k: usize) -> SuperpixelGraph {
    let mut keep = vec![false; g.edges.len()];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); g.n_nodes];
    for (idx, &(i, j, _)) in g.edges.iter().enumerate() {
        incident[i].push(idx);
        incident[j].push(idx);
    }
    for (node, list) in incident.iter_mut().enumerate() {
        let other = |idx: usize| {
            let (i, j, _) = g.edges[idx];
            if i == node {
                j
            } else {
                i
            }
        };
        list.sort_by(|&a, &b| g.edges[b].2.total_cmp(&g.edges[a].2).then(other(a).cmp(&other(b))));
        for &idx in list.iter().take(k) {
            keep[idx] = true;
        }
    }
    let edges = g.edges.iter().zip(&keep).filter(|(_, &k)| k).map(|(e, _)| *e);
    SuperpixelGraph::from_edges(g.n_nodes, edges).expect("subset of a valid graph")
}

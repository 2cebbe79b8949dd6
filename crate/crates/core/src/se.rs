//! Two-dimensional structural entropy of a graph under a flat partition,
//! and its minimization by greedy merging followed by node-level refinement.
//!
//! With no self-loops, the entropy of a partition `P` decomposes as
//!
//! ```text
//! H(P) = -Σ_i d_i/V·log2(d_i/V) + Σ_X (vol(X) - cut(X))/V·log2(vol(X)/V)
//! ```
//!
//! so every move only touches the per-module term of the modules involved.
//! All deltas below are evaluated from cached `(vol, cut)` pairs.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::graph::SuperpixelGraph;

/// A refinement move must lower the entropy by more than this.
pub const MOVE_EPSILON: f64 = 1e-12;

/// Cached volume and cut of one module.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModuleStats {
    pub vol: f64,
    pub cut: f64,
}

/// Flat partition of graph nodes into modules, i.e. a depth-two encoding
/// tree (root, modules, leaves).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    modules: Vec<Vec<usize>>,
    stats: Vec<ModuleStats>,
}

impl Partition {
    /// Every node in its own module.
    pub fn singletons(g: &SuperpixelGraph) -> Self {
        let n = g.n_nodes();
        let stats = g.degrees().iter().map(|&d| ModuleStats { vol: d, cut: d }).collect();
        Self { assignment: (0..n).collect(), modules: (0..n).map(|i| vec![i]).collect(), stats }
    }

    /// Builds a partition from arbitrary module labels. Labels are renumbered
    /// in order of first appearance.
    pub fn from_assignment(g: &SuperpixelGraph, labels: &[usize]) -> Result<Self> {
        if labels.len() != g.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                g.n_nodes()
            )));
        }
        let mut remap = HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        let mut p = Self { assignment, modules: Vec::new(), stats: Vec::new() };
        p.rebuild(g);
        Ok(p)
    }

    pub fn n_modules(&self) -> usize {
        self.modules.len()
    }

    pub fn module_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn modules(&self) -> &[Vec<usize>] {
        &self.modules
    }

    pub fn stats(&self) -> &[ModuleStats] {
        &self.stats
    }

    /// Volume and cut of every module recomputed from the graph.
    pub fn recomputed_stats(&self, g: &SuperpixelGraph) -> Vec<ModuleStats> {
        let mut stats = vec![ModuleStats::default(); self.modules.len()];
        for (v, &m) in self.assignment.iter().enumerate() {
            stats[m].vol += g.degree(v);
        }
        for &(i, j, w) in g.edges() {
            let (a, b) = (self.assignment[i], self.assignment[j]);
            if a != b {
                stats[a].cut += w;
                stats[b].cut += w;
            }
        }
        stats
    }

    /// One `node_id module_id` line per node.
    pub fn write_dump(&self, mut out: impl Write) -> io::Result<()> {
        for (v, m) in self.assignment.iter().enumerate() {
            writeln!(out, "{v} {m}")?;
        }
        Ok(())
    }

    /// Drops empty modules, renumbers the rest in ascending order of their
    /// previous ids and rebuilds node lists. Cached stats are carried over.
    fn compact(&mut self) {
        let n_old = self.stats.len();
        let mut used = vec![false; n_old];
        for &m in &self.assignment {
            used[m] = true;
        }
        let mut remap = vec![usize::MAX; n_old];
        let mut stats = Vec::new();
        for m in 0..n_old {
            if used[m] {
                remap[m] = stats.len();
                stats.push(self.stats[m]);
            }
        }
        for m in &mut self.assignment {
            *m = remap[*m];
        }
        self.stats = stats;
        self.rebuild_lists();
    }

    fn rebuild_lists(&mut self) {
        self.modules = vec![Vec::new(); self.stats.len()];
        for (v, &m) in self.assignment.iter().enumerate() {
            self.modules[m].push(v);
        }
    }

    fn rebuild(&mut self, g: &SuperpixelGraph) {
        let n_mod = self.assignment.iter().max().map_or(0, |m| m + 1);
        self.stats = vec![ModuleStats::default(); n_mod];
        self.rebuild_lists();
        self.stats = self.recomputed_stats(g);
    }

    /// Weight between `node` and the members of `module` other than itself.
    fn weight_to(&self, g: &SuperpixelGraph, node: usize, module: usize) -> f64 {
        g.neighbors(node).iter().filter(|&&(u, _)| self.assignment[u] == module).map(|e| e.1).sum()
    }
}

/// Structural entropy of `g` under `p`, evaluated term by term from
/// degrees, volumes and cuts recomputed from the graph.
pub fn structural_entropy(g: &SuperpixelGraph, p: &Partition) -> Result<f64> {
    let vol_g = g.volume();
    if g.edges().is_empty() || vol_g <= 0.0 {
        return Err(Error::EmptyGraph);
    }
    let stats = p.recomputed_stats(g);
    let mut h = 0.0;
    for (v, &m) in p.assignment.iter().enumerate() {
        let d = g.degree(v);
        if d > 0.0 && stats[m].vol > 0.0 {
            h -= d / vol_g * (d / stats[m].vol).log2();
        }
    }
    for s in &stats {
        if s.vol > 0.0 && s.cut != 0.0 {
            h -= s.cut / vol_g * (s.vol / vol_g).log2();
        }
    }
    Ok(h)
}

/// The per-module contribution `(vol - cut)/V · log2(vol/V)`; zero for an
/// empty module.
pub fn module_term(stats: ModuleStats, vol_g: f64) -> f64 {
    if stats.vol <= 0.0 {
        0.0
    } else {
        (stats.vol - stats.cut) / vol_g * (stats.vol / vol_g).log2()
    }
}

/// Entropy decrease from merging modules with stats `x` and `y` joined by
/// total edge weight `w_xy`.
pub fn merge_gain(x: ModuleStats, y: ModuleStats, w_xy: f64, vol_g: f64) -> f64 {
    let vol_xy = x.vol + y.vol;
    let cut_xy = x.cut + y.cut - 2.0 * w_xy;
    let lg = |v: f64| if v > 0.0 { v.log2() } else { 0.0 };
    ((x.vol - x.cut) * lg(x.vol) + (y.vol - y.cut) * lg(y.vol) - (vol_xy - cut_xy) * lg(vol_xy)
        + (x.cut + y.cut - cut_xy) * lg(vol_g))
        / vol_g
}

/// Entropy decrease from taking a node of degree `d` out of a module with
/// stats `x`, where `w_in` is the node's weight to the rest of that module.
pub fn remove_gain(x: ModuleStats, d: f64, w_in: f64, vol_g: f64) -> f64 {
    let rest = ModuleStats { vol: x.vol - d, cut: x.cut - d + 2.0 * w_in };
    module_term(x, vol_g) - module_term(rest, vol_g)
}

/// Entropy increase from inserting a node of degree `d` into a module with
/// stats `y`, where `w_in` is the node's weight to that module.
pub fn insert_cost(y: ModuleStats, d: f64, w_in: f64, vol_g: f64) -> f64 {
    let grown = ModuleStats { vol: y.vol + d, cut: y.cut + d - 2.0 * w_in };
    module_term(grown, vol_g) - module_term(y, vol_g)
}

/// Decrease in entropy if modules `x` and `y` of `p` were merged.
pub fn delta_merge(g: &SuperpixelGraph, p: &Partition, x: usize, y: usize) -> f64 {
    assert_ne!(x, y, "cannot merge a module with itself");
    let w_xy: f64 = p.modules[x].iter().map(|&v| p.weight_to(g, v, y)).sum();
    merge_gain(p.stats[x], p.stats[y], w_xy, g.volume())
}

/// Decrease in entropy from removing node `v` from its module `x`.
pub fn delta_remove(g: &SuperpixelGraph, p: &Partition, x: usize, v: usize) -> f64 {
    assert_eq!(p.assignment[v], x, "node {v} is not in module {x}");
    remove_gain(p.stats[x], g.degree(v), p.weight_to(g, v, x), g.volume())
}

/// Increase in entropy from inserting node `v` into module `y`.
pub fn delta_insert(g: &SuperpixelGraph, p: &Partition, y: usize, v: usize) -> f64 {
    assert_ne!(p.assignment[v], y, "node {v} is already in module {y}");
    insert_cost(p.stats[y], g.degree(v), p.weight_to(g, v, y), g.volume())
}

/// Which modules a node may move to during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineScope {
    /// Modules sharing at least one edge with the node.
    #[default]
    Adjacent,
    /// Every module.
    All,
}

/// Entropy after every merge and every refinement sweep, recomputed from
/// scratch. Only collected by [`minimize_traced`].
#[derive(Debug, Clone, Default)]
pub struct MinimizeTrace {
    pub initial: f64,
    pub after_merges: Vec<f64>,
    pub after_sweeps: Vec<f64>,
    pub sweeps: usize,
}

#[derive(Debug, PartialEq)]
struct Candidate {
    gain: f64,
    a: usize,
    b: usize,
    stamp_a: u32,
    stamp_b: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_graph(g: &SuperpixelGraph) -> Result<()> {
    if g.n_nodes() == 0 || g.edges().is_empty() {
        Err(Error::EmptyGraph)
    } else {
        Ok(())
    }
}

/// Greedy merging from singletons: repeatedly merges the edge-connected
/// module pair with the largest entropy decrease while that decrease is
/// positive.
pub fn merge_stage(g: &SuperpixelGraph) -> Result<Partition> {
    merge_impl(g, None)
}

fn merge_impl(g: &SuperpixelGraph, mut trace: Option<&mut MinimizeTrace>) -> Result<Partition> {
    check_graph(g)?;
    let vol_g = g.volume();
    let n = g.n_nodes();
    let mut p = Partition::singletons(g);
    let mut links: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
    for &(i, j, w) in g.edges() {
        links[i].insert(j, w);
        links[j].insert(i, w);
    }
    let mut stamp = vec![0u32; n];
    let mut alive = vec![true; n];
    let mut heap = BinaryHeap::new();
    for &(i, j, w) in g.edges() {
        let gain = merge_gain(p.stats[i], p.stats[j], w, vol_g);
        if gain > 0.0 {
            heap.push(Candidate { gain, a: i, b: j, stamp_a: 0, stamp_b: 0 });
        }
    }

    while let Some(c) = heap.pop() {
        if !alive[c.a] || !alive[c.b] || stamp[c.a] != c.stamp_a || stamp[c.b] != c.stamp_b {
            continue;
        }
        if c.gain <= 0.0 {
            break;
        }
        let (keep, gone) = if p.modules[c.a].len() >= p.modules[c.b].len() { (c.a, c.b) } else { (c.b, c.a) };
        let w_between = links[keep].remove(&gone).unwrap_or(0.0);
        let gone_links = std::mem::take(&mut links[gone]);
        for (z, w) in gone_links {
            if z == keep {
                continue;
            }
            links[z].remove(&gone);
            *links[z].entry(keep).or_insert(0.0) += w;
            *links[keep].entry(z).or_insert(0.0) += w;
        }
        let (sk, sg) = (p.stats[keep], p.stats[gone]);
        p.stats[keep] = ModuleStats { vol: sk.vol + sg.vol, cut: sk.cut + sg.cut - 2.0 * w_between };
        p.stats[gone] = ModuleStats::default();
        let moved = std::mem::take(&mut p.modules[gone]);
        for &v in &moved {
            p.assignment[v] = keep;
        }
        p.modules[keep].extend(moved);
        alive[gone] = false;
        stamp[keep] += 1;

        let mut neighbors: Vec<(usize, f64)> = links[keep].iter().map(|(&z, &w)| (z, w)).collect();
        neighbors.sort_unstable_by_key(|e| e.0);
        for (z, w) in neighbors {
            let gain = merge_gain(p.stats[keep], p.stats[z], w, vol_g);
            if gain > 0.0 {
                let (a, b) = (keep.min(z), keep.max(z));
                heap.push(Candidate { gain, a, b, stamp_a: stamp[a], stamp_b: stamp[b] });
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.after_merges.push(structural_entropy(g, &p)?);
        }
    }
    p.compact();
    Ok(p)
}

/// Node-level refinement with [`RefineScope::Adjacent`] candidates.
pub fn refine_stage(g: &SuperpixelGraph, p: &Partition, max_iters: usize) -> Partition {
    refine_impl(g, p.clone(), max_iters, RefineScope::Adjacent, None)
}

/// Sweeps nodes in ascending id order, moving each one to the candidate
/// module with the largest `ΔR - ΔI` when that exceeds [`MOVE_EPSILON`].
/// Ties keep the node in place, then prefer the lowest module id. Stops
/// after a sweep without moves or after `max_iters` sweeps.
pub fn refine_stage_with(g: &SuperpixelGraph, p: &Partition, max_iters: usize, scope: RefineScope) -> Partition {
    refine_impl(g, p.clone(), max_iters, scope, None)
}

fn refine_impl(
    g: &SuperpixelGraph,
    mut p: Partition,
    max_iters: usize,
    scope: RefineScope,
    mut trace: Option<&mut MinimizeTrace>,
) -> Partition {
    let vol_g = g.volume();
    if vol_g <= 0.0 {
        return p;
    }
    let mut weight_to = vec![0.0f64; p.stats.len()];
    let mut seen = vec![false; p.stats.len()];
    let mut touched: Vec<usize> = Vec::new();
    for _ in 0..max_iters {
        let mut moves = 0usize;
        for v in 0..g.n_nodes() {
            let d = g.degree(v);
            if d <= 0.0 {
                continue;
            }
            let x = p.assignment[v];
            for &(u, w) in g.neighbors(v) {
                let m = p.assignment[u];
                if !seen[m] {
                    seen[m] = true;
                    touched.push(m);
                }
                weight_to[m] += w;
            }
            let gain_remove = remove_gain(p.stats[x], d, weight_to[x], vol_g);
            let mut best_gain = 0.0;
            let mut best = x;
            let mut consider = |y: usize, w_vy: f64| {
                let gain = gain_remove - insert_cost(p.stats[y], d, w_vy, vol_g);
                if gain > MOVE_EPSILON && gain > best_gain {
                    best_gain = gain;
                    best = y;
                }
            };
            match scope {
                RefineScope::Adjacent => {
                    touched.sort_unstable();
                    for &y in touched.iter().filter(|&&y| y != x) {
                        consider(y, weight_to[y]);
                    }
                }
                RefineScope::All => {
                    for y in (0..p.stats.len()).filter(|&y| y != x && p.stats[y].vol > 0.0) {
                        consider(y, weight_to[y]);
                    }
                }
            }
            if best != x {
                let (sx, sy) = (p.stats[x], p.stats[best]);
                p.stats[x] = ModuleStats { vol: sx.vol - d, cut: sx.cut - d + 2.0 * weight_to[x] };
                p.stats[best] = ModuleStats { vol: sy.vol + d, cut: sy.cut + d - 2.0 * weight_to[best] };
                if p.stats[x].vol <= 0.0 {
                    p.stats[x] = ModuleStats::default();
                }
                p.assignment[v] = best;
                moves += 1;
            }
            for &m in &touched {
                weight_to[m] = 0.0;
                seen[m] = false;
            }
            touched.clear();
        }
        p.compact();
        weight_to.truncate(p.stats.len());
        seen.truncate(p.stats.len());
        if let Some(t) = trace.as_deref_mut() {
            t.sweeps += 1;
            t.after_sweeps.push(structural_entropy(g, &p).unwrap_or(0.0));
        }
        if moves == 0 {
            break;
        }
    }
    p
}

/// Merging then refinement; the number of modules falls out of the
/// optimization.
pub fn minimize(g: &SuperpixelGraph, max_iters: usize) -> Result<Partition> {
    minimize_with(g, max_iters, RefineScope::Adjacent)
}

pub fn minimize_with(g: &SuperpixelGraph, max_iters: usize, scope: RefineScope) -> Result<Partition> {
    let merged = merge_impl(g, None)?;
    Ok(refine_impl(g, merged, max_iters, scope, None))
}

/// [`minimize_with`] that also records the entropy after every step.
pub fn minimize_traced(g: &SuperpixelGraph, max_iters: usize, scope: RefineScope) -> Result<(Partition, MinimizeTrace)> {
    check_graph(g)?;
    let mut trace = MinimizeTrace { initial: structural_entropy(g, &Partition::singletons(g))?, ..Default::default() };
    let merged = merge_impl(g, Some(&mut trace))?;
    let p = refine_impl(g, merged, max_iters, scope, Some(&mut trace));
    Ok((p, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_edges() -> SuperpixelGraph {
        SuperpixelGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap()
    }

    pub(crate) fn bridged_cliques() -> SuperpixelGraph {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        edges.push((3, 4, 0.01));
        SuperpixelGraph::from_edges(8, edges).unwrap()
    }

    /// All set partitions of `0..n` as label vectors (restricted growth strings).
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
            if i == n {
                out.push(cur.clone());
                return;
            }
            for l in 0..=max + 1 {
                cur.push(l);
                rec(i + 1, n, cur, max.max(l), out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        let mut cur = vec![0];
        rec(1, n, &mut cur, 0, &mut out);
        out
    }

    fn exhaustive_optimum(g: &SuperpixelGraph) -> (f64, Vec<usize>) {
        all_partitions(g.n_nodes())
            .into_iter()
            .map(|labels| {
                let p = Partition::from_assignment(g, &labels).unwrap();
                (structural_entropy(g, &p).unwrap(), labels)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
    }

    fn same_grouping(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn bell_numbers() {
        assert_eq!(all_partitions(4).len(), 15);
        assert_eq!(all_partitions(8).len(), 4140);
    }

    #[test]
    fn entropy_two_nodes() {
        let g = SuperpixelGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let p = Partition::from_assignment(&g, &[0, 0]).unwrap();
        assert!((structural_entropy(&g, &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_two_edges() {
        let g = two_edges();
        let split = Partition::from_assignment(&g, &[0, 0, 1, 1]).unwrap();
        let whole = Partition::from_assignment(&g, &[0, 0, 0, 0]).unwrap();
        assert!((structural_entropy(&g, &split).unwrap() - 1.0).abs() < 1e-15);
        assert!((structural_entropy(&g, &whole).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_entropy_is_degree_entropy() {
        let g = bridged_cliques();
        let vol = g.volume();
        let expect: f64 = g.degrees().iter().map(|&d| -(d / vol) * (d / vol).log2()).sum();
        let h = structural_entropy(&g, &Partition::singletons(&g)).unwrap();
        assert!((h - expect).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_edgeless_graph() {
        let g = SuperpixelGraph::from_edges(3, []).unwrap();
        assert!(matches!(structural_entropy(&g, &Partition::singletons(&g)), Err(Error::EmptyGraph)));
        assert!(matches!(merge_stage(&g), Err(Error::EmptyGraph)));
    }

    #[test]
    fn merging_disconnected_modules_costs_one_bit() {
        let g = two_edges();
        let p = Partition::from_assignment(&g, &[0, 0, 1, 1]).unwrap();
        let gain = delta_merge(&g, &p, 0, 1);
        assert!((gain + 1.0).abs() < 1e-15);
        let merged = Partition::from_assignment(&g, &[0, 0, 0, 0]).unwrap();
        let direct = structural_entropy(&g, &p).unwrap() - structural_entropy(&g, &merged).unwrap();
        assert!((gain - direct).abs() < 1e-12);
    }

    #[test]
    fn merging_equal_closed_modules() {
        // cut = 0 on both sides and after: gain = -2 vol(X)/V
        let g = SuperpixelGraph::from_edges(6, [(0, 1, 0.7), (2, 3, 0.2), (2, 4, 0.5), (4, 5, 0.3)]).unwrap();
        let p = Partition::from_assignment(&g, &[0, 0, 1, 1, 2, 2]).unwrap();
        let merged_stats = Partition::from_assignment(&g, &[0, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(merged_stats.stats()[1].cut, 0.0);
        let g2 = SuperpixelGraph::from_edges(4, [(0, 1, 0.7), (2, 3, 0.7)]).unwrap();
        let p2 = Partition::from_assignment(&g2, &[0, 0, 1, 1]).unwrap();
        let vol_x = p2.stats()[0].vol;
        assert!((delta_merge(&g2, &p2, 0, 1) - (-2.0 * vol_x / g2.volume())).abs() < 1e-14);
        // still the defining identity on the first graph
        let before = structural_entropy(&g, &p).unwrap();
        let after = structural_entropy(&g, &merged_stats).unwrap();
        assert!((delta_merge(&g, &p, 1, 2) - (before - after)).abs() < 1e-12);
    }

    #[test]
    fn remove_from_pair() {
        let g = two_edges();
        let p = Partition::from_assignment(&g, &[0, 0, 1, 1]).unwrap();
        assert!((delta_remove(&g, &p, 0, 1) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn remove_sole_node() {
        let g = two_edges();
        let p = Partition::singletons(&g);
        let s = p.stats()[1];
        let expect = (s.vol - s.cut) / 4.0 * (s.vol / 4.0).log2();
        assert_eq!(delta_remove(&g, &p, 1, 1), expect);
    }

    #[test]
    fn insert_and_remove_agree() {
        // moving v out of Y∪{v} and back into Y touch the same two module terms
        let g = bridged_cliques();
        let with_v = Partition::from_assignment(&g, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let without_v = Partition::from_assignment(&g, &[0, 0, 0, 2, 1, 1, 1, 1]).unwrap();
        let ins = delta_insert(&g, &without_v, 0, 3);
        let rem = delta_remove(&g, &with_v, 0, 3);
        assert!((ins - rem).abs() < 1e-12, "{ins} vs {rem}");
    }

    #[test]
    fn insert_isolated_node_into_other_pair() {
        let g = two_edges();
        let p = Partition::from_assignment(&g, &[0, 1, 2, 2]).unwrap();
        // Y = {2,3}: vol 2, cut 0; v = 1: degree 1, no edge into Y
        // ΔI = -(2/4) log2(2/4) + ((3 - 1)/4) log2(3/4)
        let expect = -(2.0 / 4.0) * (0.5f64).log2() + (2.0 / 4.0) * (0.75f64).log2();
        assert!((delta_insert(&g, &p, 2, 1) - expect).abs() < 1e-15);
    }

    #[test]
    fn insert_into_empty_module_is_singleton_term() {
        let cost = insert_cost(ModuleStats::default(), 1.5, 0.0, 10.0);
        let singleton = module_term(ModuleStats { vol: 1.5, cut: 1.5 }, 10.0);
        assert_eq!(cost, singleton);
        assert_eq!(singleton, 0.0);
    }

    #[test]
    fn merge_two_edges_matches_exhaustive() {
        let g = two_edges();
        let p = merge_stage(&g).unwrap();
        let (best, labels) = exhaustive_optimum(&g);
        assert!(same_grouping(p.assignment(), &labels));
        assert_eq!(structural_entropy(&g, &p).unwrap(), 1.0);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn merge_bridged_cliques_matches_exhaustive() {
        let g = bridged_cliques();
        let p = merge_stage(&g).unwrap();
        let (_, labels) = exhaustive_optimum(&g);
        assert!(same_grouping(p.assignment(), &labels));
        assert!(same_grouping(p.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1]));
    }

    #[test]
    fn triangle_stops_at_two_modules() {
        let g = SuperpixelGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let p = Partition::singletons(&g);
        assert!(delta_merge(&g, &p, 0, 1) > 0.0);
        // joining the last singleton gives back (2/6) log2(3/2) bits
        let pair = Partition::from_assignment(&g, &[0, 0, 1]).unwrap();
        assert!((delta_merge(&g, &pair, 0, 1) + (1.5f64).log2() / 3.0).abs() < 1e-12);
        let merged = merge_stage(&g).unwrap();
        assert_eq!(merged.n_modules(), 2);
        let (best, _) = exhaustive_optimum(&g);
        assert!((structural_entropy(&g, &merged).unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn refine_fixed_point() {
        let g = bridged_cliques();
        let p = Partition::from_assignment(&g, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        let (_, trace) = {
            let mut t = MinimizeTrace::default();
            let out = refine_impl(&g, p.clone(), 10, RefineScope::Adjacent, Some(&mut t));
            assert_eq!(out.assignment(), p.assignment());
            (out, t)
        };
        assert_eq!(trace.sweeps, 1);
    }

    #[test]
    fn refine_moves_misassigned_node_home() {
        let g = bridged_cliques();
        let p = Partition::from_assignment(&g, &[0, 0, 0, 1, 1, 1, 1, 1]).unwrap();
        let x = p.module_of(3);
        let home = p.module_of(0);
        let gain = delta_remove(&g, &p, x, 3) - delta_insert(&g, &p, home, 3);
        assert!(gain > 0.0);
        let mut t = MinimizeTrace::default();
        let out = refine_impl(&g, p, 10, RefineScope::Adjacent, Some(&mut t));
        assert!(same_grouping(out.assignment(), &[0, 0, 0, 0, 1, 1, 1, 1]));
        assert_eq!(t.sweeps, 2);
    }

    #[test]
    fn refine_zero_iterations_is_identity() {
        let g = bridged_cliques();
        let p = Partition::from_assignment(&g, &[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(refine_stage(&g, &p, 0), p);
    }

    #[test]
    fn minimize_small_graphs() {
        let g = two_edges();
        let p = minimize(&g, 100).unwrap();
        assert_eq!(p.n_modules(), 2);
        assert_eq!(structural_entropy(&g, &p).unwrap(), 1.0);
        let g = bridged_cliques();
        assert_eq!(minimize(&g, 100).unwrap().n_modules(), 2);
    }

    #[test]
    fn dumps_partition() {
        let g = two_edges();
        let p = minimize(&g, 10).unwrap();
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 0\n1 0\n2 1\n3 1\n");
    }

    #[test]
    fn planted_blobs_recovered() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 90;
        let blob = |i: usize| i % 3;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = if blob(i) == blob(j) { rng.gen_range(0.9..1.0) } else { rng.gen_range(0.005..0.015) };
                if rng.gen_bool(0.5) {
                    edges.push((i, j, w));
                }
            }
        }
        let g = crate::graph::knn_sparsify(&SuperpixelGraph::from_edges(n, edges).unwrap(), 50);
        let p = minimize(&g, 100).unwrap();
        assert_eq!(p.n_modules(), 3);
        for m in p.modules() {
            let mut counts = [0usize; 3];
            for &v in m {
                counts[blob(v)] += 1;
            }
            let purity = *counts.iter().max().unwrap() as f64 / m.len() as f64;
            assert!(purity >= 0.95);
        }
    }
}

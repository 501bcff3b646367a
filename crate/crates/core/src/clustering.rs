//! Density-based climate classes (HDBSCAN).
//!
//! The pipeline is the standard one: core distances, mutual-reachability
//! minimum spanning tree, single-linkage hierarchy, condensed tree pruned by
//! `min_cluster_size`, and excess-of-mass cluster selection. The root of the
//! condensed tree is never selected, so a dataset without a real split is
//! all noise.
//!
//! Distances are exact and computed on the fly (no index, no dense matrix);
//! memory stays `O(n)` while time is `O(n^2 d)`.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::climate::FeatureVector;
use crate::error::{Error, Result};

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 5,
            min_samples: 5,
        }
    }
}

impl ClusterParams {
    pub fn new(min_cluster_size: usize, min_samples: usize) -> Result<Self> {
        let p = Self {
            min_cluster_size,
            min_samples,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Domain(format!(
                "min_cluster_size must be >= 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.min_samples < 1 {
            return Err(Error::Domain("min_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cluster assignment for every port, in input order. Cluster ids run
/// `1..=K` by order of first member; [`NOISE`] marks unassigned ports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    pub ports: Vec<String>,
    pub labels: Vec<i64>,
    pub stabilities: BTreeMap<i64, f64>,
}

impl ClusterLabeling {
    pub fn label_of(&self, port_id: &str) -> Option<i64> {
        self.ports
            .iter()
            .position(|p| p == port_id)
            .map(|i| self.labels[i])
    }

    pub fn num_clusters(&self) -> usize {
        self.stabilities.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn as_map(&self) -> BTreeMap<String, i64> {
        self.ports
            .iter()
            .cloned()
            .zip(self.labels.iter().copied())
            .collect()
    }

    pub fn stability_of(&self, label: i64) -> Option<f64> {
        self.stabilities.get(&label).copied()
    }
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_points(points: &[Vec<f64>]) -> Result<()> {
    let first = points.first().ok_or(Error::EmptyDataset("cluster input"))?;
    for p in points {
        if p.len() != first.len() {
            return Err(Error::Dimension {
                expected: first.len(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// Distance from each point to its `k`-th nearest other point, or to its
/// farthest neighbour when `k >= n`.
pub fn core_distances(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    check_points(points)?;
    if k == 0 {
        return Err(Error::Domain("k must be >= 1".into()));
    }
    let n = points.len();
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let rank = k.min(n - 1) - 1;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| dist(&points[i], &points[j]))
                .collect();
            let (_, kth, _) = row.select_nth_unstable_by(rank, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn mutual_reachability(d_ij: f64, core_i: f64, core_j: f64) -> f64 {
    d_ij.max(core_i).max(core_j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm over the implicit mutual-reachability graph. Edges come
/// back sorted by weight, ties by `(smaller index, larger index)`.
pub fn mutual_reachability_mst(points: &[Vec<f64>], core: &[f64]) -> Result<Vec<MstEdge>> {
    check_points(points)?;
    let n = points.len();
    if core.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: core.len(),
        });
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let cur_point = &points[current];
        let cur_core = core[current];
        // relax edges from the newest tree node
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&j| !in_tree[j])
            .map(|j| {
                let w = mutual_reachability(dist(cur_point, &points[j]), cur_core, core[j]);
                (j, w)
            })
            .collect();
        for (j, w) in updates {
            if w < best[j] {
                best[j] = w;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: from[next].min(next),
            b: from[next].max(next),
            weight: best[next],
        });
        current = next;
    }
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    Ok(edges)
}

struct LinkageNode {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

/// Single-linkage merges from sorted MST edges. Node ids `< n` are points;
/// node `n + k` is the `k`-th merge.
fn single_linkage(n: usize, edges: &[MstEdge]) -> Vec<LinkageNode> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut nodes = Vec::with_capacity(n.saturating_sub(1));
    for (k, e) in edges.iter().enumerate() {
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        let id = n + k;
        parent[ra] = id;
        parent[rb] = id;
        size[id] = size[ra] + size[rb];
        nodes.push(LinkageNode {
            left: ra,
            right: rb,
            distance: e.weight,
            size: size[id],
        });
    }
    nodes
}

/// One condensed-tree row: `child` (point or cluster) leaves `parent` at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedRow {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

/// Condensed tree. Points keep their ids `0..n`; clusters are numbered from
/// `n`, with `n` the root and children always numbered above their parent.
pub struct CondensedTree {
    pub n_points: usize,
    pub rows: Vec<CondensedRow>,
}

fn condense(n: usize, linkage: &[LinkageNode], min_cluster_size: usize) -> CondensedTree {
    let mut rows = Vec::new();
    if linkage.is_empty() {
        return CondensedTree { n_points: n, rows };
    }
    let node_size = |id: usize| if id < n { 1 } else { linkage[id - n].size };
    let leaves_under = |id: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let node = &linkage[x - n];
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        out.sort_unstable();
        out
    };

    let root = n + linkage.len() - 1;
    let mut next_label = n + 1;
    let mut queue = VecDeque::from([(root, n)]);
    while let Some((node, label)) = queue.pop_front() {
        if node < n {
            continue;
        }
        let LinkageNode {
            left,
            right,
            distance,
            ..
        } = linkage[node - n];
        let lambda = if distance > 0.0 {
            1.0 / distance
        } else {
            f64::INFINITY
        };
        let (ls, rs) = (node_size(left), node_size(right));
        let (left_big, right_big) = (ls >= min_cluster_size, rs >= min_cluster_size);
        let fall_out = |child: usize, rows: &mut Vec<CondensedRow>| {
            for p in leaves_under(child) {
                rows.push(CondensedRow {
                    parent: label,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
        };
        match (left_big, right_big) {
            (true, true) => {
                for (child, size) in [(left, ls), (right, rs)] {
                    let child_label = next_label;
                    next_label += 1;
                    rows.push(CondensedRow {
                        parent: label,
                        child: child_label,
                        lambda,
                        size,
                    });
                    queue.push_back((child, child_label));
                }
            }
            (true, false) => {
                fall_out(right, &mut rows);
                queue.push_back((left, label));
            }
            (false, true) => {
                fall_out(left, &mut rows);
                queue.push_back((right, label));
            }
            (false, false) => {
                fall_out(left, &mut rows);
                fall_out(right, &mut rows);
            }
        }
    }
    CondensedTree { n_points: n, rows }
}

impl CondensedTree {
    fn n_clusters(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.child >= self.n_points)
            .map(|r| r.child - self.n_points + 1)
            .max()
            .unwrap_or(if self.rows.is_empty() { 0 } else { 1 })
    }

    /// Excess-of-mass stability per cluster, indexed by `cluster - n`.
    pub fn stabilities(&self) -> Vec<f64> {
        let n = self.n_points;
        let k = self.n_clusters();
        let mut birth = vec![0.0; k];
        for r in &self.rows {
            if r.child >= n {
                birth[r.child - n] = r.lambda;
            }
        }
        let mut stability = vec![0.0; k];
        for r in &self.rows {
            let b = birth[r.parent - n];
            if r.lambda > b {
                stability[r.parent - n] += (r.lambda - b) * r.size as f64;
            }
        }
        stability
    }

    /// Cluster ids chosen by excess of mass, root excluded.
    fn select_eom(&self) -> Vec<bool> {
        let n = self.n_points;
        let k = self.n_clusters();
        let own = self.stabilities();
        let mut propagated = own.clone();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
        for r in &self.rows {
            if r.child >= n {
                children[r.parent - n].push(r.child - n);
            }
        }
        let mut selected = vec![false; k];
        for c in (1..k).rev() {
            let subtree: f64 = children[c].iter().map(|&ch| propagated[ch]).sum();
            if subtree > own[c] {
                propagated[c] = subtree;
            } else {
                selected[c] = true;
                let mut stack = children[c].clone();
                while let Some(d) = stack.pop() {
                    selected[d] = false;
                    stack.extend(children[d].iter().copied());
                }
            }
        }
        selected
    }
}

/// HDBSCAN labels for raw points. Returns per-point labels in
/// `1..=K` by first appearance (or [`NOISE`]) and per-label stability.
pub fn cluster_points(points: &[Vec<f64>], params: &ClusterParams) -> Result<(Vec<i64>, BTreeMap<i64, f64>)> {
    check_points(points)?;
    params.validate()?;
    let n = points.len();
    if n < params.min_cluster_size || params.min_samples > n {
        return Ok((vec![NOISE; n], BTreeMap::new()));
    }
    let core = core_distances(points, params.min_samples)?;
    let mst = mutual_reachability_mst(points, &core)?;
    let linkage = single_linkage(n, &mst);
    let tree = condense(n, &linkage, params.min_cluster_size);
    let selected = tree.select_eom();
    let stability = tree.stabilities();

    let k = selected.len();
    let mut cluster_parent = vec![usize::MAX; k];
    let mut point_parent = vec![usize::MAX; n];
    for r in &tree.rows {
        if r.child >= n {
            cluster_parent[r.child - n] = r.parent - n;
        } else {
            point_parent[r.child] = r.parent - n;
        }
    }

    let mut raw = vec![None; n];
    for (p, slot) in raw.iter_mut().enumerate() {
        let mut c = point_parent[p];
        while c != usize::MAX {
            if selected[c] {
                *slot = Some(c);
                break;
            }
            c = cluster_parent[c];
        }
    }

    let mut relabel: BTreeMap<usize, i64> = BTreeMap::new();
    let mut labels = vec![NOISE; n];
    let mut stabilities = BTreeMap::new();
    for (p, c) in raw.iter().enumerate() {
        if let Some(c) = *c {
            let next = relabel.len() as i64 + 1;
            let label = *relabel.entry(c).or_insert(next);
            labels[p] = label;
            stabilities.insert(label, stability[c]);
        }
    }
    Ok((labels, stabilities))
}

pub fn cluster(features: &[FeatureVector], params: &ClusterParams) -> Result<ClusterLabeling> {
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let (labels, stabilities) = cluster_points(&points, params)?;
    Ok(ClusterLabeling {
        ports: features.iter().map(|f| f.port_id.clone()).collect(),
        labels,
        stabilities,
    })
}

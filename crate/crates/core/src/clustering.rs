//! Density-based hierarchical clustering (HDBSCAN) of reduced keyword vectors.
//!
//! The implementation follows the usual stages: core distances, mutual
//! reachability, a minimum spanning tree, a condensed cluster tree and
//! excess-of-mass selection. Merges that happen at exactly the same mutual
//! reachability level are folded into one multi-way node, which makes the
//! resulting partition independent of input row order.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Article;
use crate::vectors::ReducedTable;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("{points} points is fewer than min_samples = {min_samples}")]
    FewerThanMinSamples { points: usize, min_samples: usize },
    #[error("min_cluster_size and min_samples must be at least 1")]
    InvalidParams,
    #[error("cluster {0} does not exist")]
    UnknownCluster(usize),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("cluster dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// Let the root be selected as the only cluster.
    #[serde(default)]
    pub allow_single_cluster: bool,
}

impl HdbscanParams {
    /// `min_samples` defaults to `min_cluster_size`.
    pub fn new(min_cluster_size: usize) -> Self {
        Self {
            min_cluster_size,
            min_samples: min_cluster_size,
            allow_single_cluster: false,
        }
    }

    pub fn with_min_samples(mut self, min_samples: usize) -> Self {
        self.min_samples = min_samples;
        self
    }
}

impl Default for HdbscanParams {
    fn default() -> Self {
        Self {
            min_cluster_size: 200,
            min_samples: 18,
            allow_single_cluster: false,
        }
    }
}

/// Per-point cluster labels; `None` marks noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub keys: Vec<String>,
    pub labels: Vec<Option<usize>>,
    pub probabilities: Vec<f64>,
    pub cluster_count: usize,
}

impl ClusterResult {
    pub fn label_of(&self, keyword: &str) -> Option<usize> {
        self.keys
            .iter()
            .position(|k| k == keyword)
            .and_then(|i| self.labels[i])
    }

    /// Member keywords of a cluster in table order.
    pub fn members(&self, cluster_id: usize) -> Vec<&str> {
        self.keys
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == Some(cluster_id))
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Write `keyword,cluster_id,probability`; noise is `-1`.
    pub fn write_dump(&self, path: &Path) -> Result<(), ClusterError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["keyword", "cluster_id", "probability"])?;
        for ((k, l), p) in self.keys.iter().zip(&self.labels).zip(&self.probabilities) {
            let id = l.map_or("-1".to_string(), |c| c.to_string());
            w.write_record([k.as_str(), &id, &p.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_dump(path: &Path) -> Result<Self, ClusterError> {
        #[derive(Deserialize)]
        struct Row {
            keyword: String,
            cluster_id: i64,
            probability: f64,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out = ClusterResult {
            keys: vec![],
            labels: vec![],
            probabilities: vec![],
            cluster_count: 0,
        };
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            let label = match row.cluster_id {
                -1 => None,
                c if c >= 0 => Some(c as usize),
                c => return Err(ClusterError::Dump(format!("bad cluster id {c}"))),
            };
            if let Some(c) = label {
                out.cluster_count = out.cluster_count.max(c + 1);
            }
            out.keys.push(row.keyword);
            out.labels.push(label);
            out.probabilities.push(row.probability);
        }
        Ok(out)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance to the `k`-th nearest point, counting the point itself.
pub fn core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    points
        .par_iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| euclidean(p, q)).collect();
            let idx = (k.max(1) - 1).min(d.len() - 1);
            let (_, kth, _) = d.select_nth_unstable_by(idx, f64::total_cmp);
            *kth
        })
        .collect()
}

pub fn mutual_reachability(points: &[Vec<f64>], core: &[f64], i: usize, j: usize) -> f64 {
    euclidean(&points[i], &points[j]).max(core[i]).max(core[j])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

fn edge_key_less(w1: f64, p1: (usize, usize), w2: f64, p2: (usize, usize)) -> bool {
    match w1.total_cmp(&w2) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => p1 < p2,
    }
}

/// Minimum spanning tree of the complete mutual-reachability graph (Prim).
///
/// Edges are totally ordered by `(weight, lower index, higher index)`, which
/// makes the tree unique. Returned edges have `a < b` and are sorted by that
/// key.
pub fn mutual_reachability_mst(points: &[Vec<f64>], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    if n < 2 {
        return vec![];
    }
    let mut in_tree = vec![false; n];
    let mut best_w = vec![f64::INFINITY; n];
    let mut best_from = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = mutual_reachability(points, core, current, v);
            let cand = (current.min(v), current.max(v));
            let old = (best_from[v].min(v), best_from[v].max(v));
            if best_from[v] == usize::MAX || edge_key_less(w, cand, best_w[v], old) {
                best_w[v] = w;
                best_from[v] = current;
            }
        }
        let mut next = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            if next == usize::MAX {
                next = v;
                continue;
            }
            let pv = (best_from[v].min(v), best_from[v].max(v));
            let pn = (best_from[next].min(next), best_from[next].max(next));
            if edge_key_less(best_w[v], pv, best_w[next], pn) {
                next = v;
            }
        }
        in_tree[next] = true;
        let (a, b) = (best_from[next].min(next), best_from[next].max(next));
        edges.push(MstEdge {
            a,
            b,
            weight: best_w[next],
        });
        current = next;
    }
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then((x.a, x.b).cmp(&(y.a, y.b))));
    edges
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Single-linkage hierarchy node. Ids `0..n` are the points themselves.
#[derive(Debug, Clone)]
struct HierNode {
    children: Vec<usize>,
    distance: f64,
    size: usize,
}

fn build_hierarchy(n: usize, mst: &[MstEdge]) -> Vec<HierNode> {
    let mut nodes: Vec<HierNode> = (0..n)
        .map(|_| HierNode {
            children: vec![],
            distance: 0.0,
            size: 1,
        })
        .collect();
    let mut uf = UnionFind::new(n);
    let mut node_of_root: Vec<usize> = (0..n).collect();
    let mut i = 0;
    while i < mst.len() {
        let w = mst[i].weight;
        let mut j = i;
        while j < mst.len() && mst[j].weight == w {
            j += 1;
        }
        let group = &mst[i..j];
        let mut pre: Vec<(usize, usize)> = Vec::new();
        for e in group {
            for v in [e.a, e.b] {
                let r = uf.find(v);
                if !pre.iter().any(|(root, _)| *root == r) {
                    pre.push((r, node_of_root[r]));
                }
            }
        }
        for e in group {
            uf.union(e.a, e.b);
        }
        let mut merged: HashMap<usize, Vec<usize>> = HashMap::new();
        for (root, node) in pre {
            merged.entry(uf.find(root)).or_default().push(node);
        }
        let mut merged: Vec<(usize, Vec<usize>)> = merged.into_iter().collect();
        for (_, children) in merged.iter_mut() {
            children.sort_unstable();
        }
        merged.sort_by_key(|(_, children)| children[0]);
        for (root, children) in merged {
            let size = children.iter().map(|&c| nodes[c].size).sum();
            nodes.push(HierNode {
                children,
                distance: w,
                size,
            });
            node_of_root[root] = nodes.len() - 1;
        }
        i = j;
    }
    nodes
}

fn lambda_of(distance: f64) -> f64 {
    1.0 / distance.max(1e-12)
}

#[derive(Debug, Clone)]
struct CondensedCluster {
    parent: Option<usize>,
    birth: f64,
    children: Vec<usize>,
    stability: f64,
}

/// Cluster point rows. `keys` only labels the output.
pub fn hdbscan_points(
    keys: Vec<String>,
    points: &[Vec<f64>],
    params: &HdbscanParams,
) -> Result<ClusterResult, ClusterError> {
    let n = points.len();
    if params.min_cluster_size == 0 || params.min_samples == 0 {
        return Err(ClusterError::InvalidParams);
    }
    if n < 2 {
        return Err(ClusterError::TooFewPoints(n));
    }
    if n < params.min_cluster_size {
        return Ok(ClusterResult {
            keys,
            labels: vec![None; n],
            probabilities: vec![0.0; n],
            cluster_count: 0,
        });
    }
    if n < params.min_samples {
        return Err(ClusterError::FewerThanMinSamples {
            points: n,
            min_samples: params.min_samples,
        });
    }

    let core = core_distances(points, params.min_samples);
    let mst = mutual_reachability_mst(points, &core);
    let nodes = build_hierarchy(n, &mst);
    let mcs = params.min_cluster_size;

    let mut clusters = vec![CondensedCluster {
        parent: None,
        birth: 0.0,
        children: vec![],
        stability: 0.0,
    }];
    let mut point_cluster = vec![0usize; n];
    let mut point_lambda = vec![0.0f64; n];

    let mut stack = vec![(nodes.len() - 1, 0usize)];
    let mut leaves = Vec::new();
    while let Some((nid, cid)) = stack.pop() {
        let node = &nodes[nid];
        if node.children.is_empty() {
            point_cluster[nid] = cid;
            point_lambda[nid] = clusters[cid].birth;
            continue;
        }
        let lambda = lambda_of(node.distance);
        let birth = clusters[cid].birth;
        let (big, small): (Vec<usize>, Vec<usize>) = node
            .children
            .iter()
            .partition(|&&c| nodes[c].size >= mcs);
        for child in small {
            leaves.clear();
            collect_leaves(&nodes, child, &mut leaves);
            for &p in &leaves {
                point_cluster[p] = cid;
                point_lambda[p] = lambda;
            }
            clusters[cid].stability += leaves.len() as f64 * (lambda - birth);
        }
        match big.len() {
            0 => {}
            1 => stack.push((big[0], cid)),
            _ => {
                for child in big {
                    let size = nodes[child].size;
                    clusters[cid].stability += size as f64 * (lambda - birth);
                    clusters.push(CondensedCluster {
                        parent: Some(cid),
                        birth: lambda,
                        children: vec![],
                        stability: 0.0,
                    });
                    let new_id = clusters.len() - 1;
                    clusters[cid].children.push(new_id);
                    stack.push((child, new_id));
                }
            }
        }
    }

    // excess-of-mass selection, children before parents
    let mut selected = vec![true; clusters.len()];
    if !params.allow_single_cluster {
        selected[0] = false;
    }
    let mut stability: Vec<f64> = clusters.iter().map(|c| c.stability).collect();
    for cid in (0..clusters.len()).rev() {
        if cid == 0 && !params.allow_single_cluster {
            continue;
        }
        let children = &clusters[cid].children;
        if children.is_empty() {
            continue;
        }
        let child_sum: f64 = children.iter().map(|&c| stability[c]).sum();
        if child_sum > stability[cid] {
            selected[cid] = false;
            stability[cid] = child_sum;
        } else {
            let mut sub = children.clone();
            while let Some(c) = sub.pop() {
                selected[c] = false;
                sub.extend(clusters[c].children.iter().copied());
            }
        }
    }

    let mut raw_label = vec![None; n];
    for p in 0..n {
        let mut c = Some(point_cluster[p]);
        while let Some(id) = c {
            if selected[id] {
                raw_label[p] = Some(id);
                break;
            }
            c = clusters[id].parent;
        }
    }

    // dense ids ordered by the lowest member index
    let mut dense: HashMap<usize, usize> = HashMap::new();
    for l in raw_label.iter().flatten() {
        let next = dense.len();
        dense.entry(*l).or_insert(next);
    }
    let labels: Vec<Option<usize>> = raw_label.iter().map(|l| l.map(|c| dense[&c])).collect();

    let mut max_lambda = vec![0.0f64; dense.len()];
    for p in 0..n {
        if let Some(c) = labels[p] {
            max_lambda[c] = max_lambda[c].max(point_lambda[p]);
        }
    }
    let probabilities = (0..n)
        .map(|p| match labels[p] {
            None => 0.0,
            Some(c) if max_lambda[c] > 0.0 => point_lambda[p].min(max_lambda[c]) / max_lambda[c],
            Some(_) => 1.0,
        })
        .collect();

    Ok(ClusterResult {
        keys,
        labels,
        probabilities,
        cluster_count: dense.len(),
    })
}

fn collect_leaves(nodes: &[HierNode], root: usize, out: &mut Vec<usize>) {
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        if nodes[id].children.is_empty() {
            out.push(id);
        } else {
            stack.extend(nodes[id].children.iter().copied());
        }
    }
}

/// Cluster the rows of a reduced table with Euclidean distance.
pub fn hdbscan(table: &ReducedTable, params: &HdbscanParams) -> Result<ClusterResult, ClusterError> {
    hdbscan_points(table.keys().to_vec(), table.rows(), params)
}

/// The `k` member keywords that occur most often across the corpus.
///
/// Ties are broken lexicographically.
pub fn top_keywords(
    result: &ClusterResult,
    corpus: &[Article],
    cluster_id: usize,
    k: usize,
) -> Result<Vec<String>, ClusterError> {
    if cluster_id >= result.cluster_count {
        return Err(ClusterError::UnknownCluster(cluster_id));
    }
    let members = result.members(cluster_id);
    if members.is_empty() {
        return Err(ClusterError::EmptyCluster(cluster_id));
    }
    let mut counts: HashMap<&str, usize> = members.iter().map(|m| (*m, 0)).collect();
    for article in corpus {
        for kw in &article.keywords {
            if let Some(c) = counts.get_mut(kw.as_str()) {
                *c += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(ranked.into_iter().take(k).map(|(k, _)| k.to_string()).collect())
}

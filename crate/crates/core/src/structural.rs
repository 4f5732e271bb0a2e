//! Virtual anchor nodes and the inverse-distance structural features built
//! from them.
//!
//! Anchor `i` (1-indexed) links to each real node independently with
//! probability `2^-i`. Distances are measured on the augmented graph, so a
//! well-connected anchor can bridge otherwise disconnected components.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, TegError};
use crate::graph::Graph;
use crate::numerics::Tensor;

/// What to do with an anchor whose Bernoulli draws produced no edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyAnchorPolicy {
    /// Keep it; its feature column is all zeros.
    Keep,
    /// Redraw the anchor's edges until at least one exists, i.e. sample the
    /// construction conditioned on a non-empty neighborhood.
    #[default]
    Redraw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    num_nodes: usize,
    seed: u64,
    /// Sorted real-node neighbors of each anchor.
    members: Vec<Vec<usize>>,
}

impl AnchorSet {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn members(&self, anchor: usize) -> &[usize] {
        &self.members[anchor]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn contains(&self, anchor: usize, v: usize) -> bool {
        self.members[anchor].binary_search(&v).is_ok()
    }
}

pub fn attach_anchors(graph: &Graph, k: usize, seed: u64) -> AnchorSet {
    attach_anchors_with(graph, k, seed, EmptyAnchorPolicy::default())
}

pub fn attach_anchors_with(
    graph: &Graph,
    k: usize,
    seed: u64,
    policy: EmptyAnchorPolicy,
) -> AnchorSet {
    let n = graph.num_nodes();
    let members = (1..=k)
        .map(|i| {
            let p = 0.5f64.powi(i as i32);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            loop {
                let picked: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < p).collect();
                if !picked.is_empty() || policy == EmptyAnchorPolicy::Keep || n == 0 {
                    break picked;
                }
            }
        })
        .collect();
    AnchorSet {
        num_nodes: n,
        seed,
        members,
    }
}

/// The original graph plus anchor vertices `n..n+k`.
struct Augmented<'a> {
    graph: &'a Graph,
    anchors: &'a AnchorSet,
    /// For each real node, the anchors linked to it.
    node_anchors: Vec<Vec<usize>>,
}

impl<'a> Augmented<'a> {
    fn new(graph: &'a Graph, anchors: &'a AnchorSet) -> Self {
        let mut node_anchors = vec![Vec::new(); graph.num_nodes()];
        for a in 0..anchors.k() {
            for &v in anchors.members(a) {
                node_anchors[v].push(a);
            }
        }
        Self {
            graph,
            anchors,
            node_anchors,
        }
    }

    /// Hop distances from anchor `source` to every real node.
    fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let n = self.graph.num_nodes();
        let mut dist: Vec<Option<usize>> = vec![None; n + self.anchors.k()];
        let mut queue = VecDeque::new();
        dist[n + source] = Some(0);
        queue.push_back(n + source);
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap() + 1;
            let mut visit = |y: usize, queue: &mut VecDeque<usize>| {
                if dist[y].is_none() {
                    dist[y] = Some(d);
                    queue.push_back(y);
                }
            };
            if x >= n {
                for &v in self.anchors.members(x - n) {
                    visit(v, &mut queue);
                }
            } else {
                for &v in self.graph.neighbors(x) {
                    visit(v, &mut queue);
                }
                for &a in &self.node_anchors[x] {
                    visit(n + a, &mut queue);
                }
            }
        }
        dist.truncate(n);
        dist
    }
}

/// Shortest hop distance from anchor `anchor_index` to every real node on
/// the augmented graph; `None` when unreachable.
pub fn bfs_distances(
    graph: &Graph,
    anchors: &AnchorSet,
    anchor_index: usize,
) -> Vec<Option<usize>> {
    assert!(
        anchor_index < anchors.k(),
        "anchor index {anchor_index} out of {}",
        anchors.k()
    );
    Augmented::new(graph, anchors).bfs(anchor_index)
}

/// Hop distances from a real node within the original graph.
pub fn graph_bfs(graph: &Graph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; graph.num_nodes()];
    let mut queue = VecDeque::from([source]);
    dist[source] = Some(0);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].unwrap() + 1;
        for &y in graph.neighbors(x) {
            if dist[y].is_none() {
                dist[y] = Some(d);
                queue.push_back(y);
            }
        }
    }
    dist
}

/// `|V| × k` matrix of `1/(d+1)`, zero where unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralFeatures {
    matrix: Tensor,
}

impl StructuralFeatures {
    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    fn from_distances(num_nodes: usize, columns: Vec<Vec<Option<usize>>>) -> Self {
        let k = columns.len();
        let mut matrix = Tensor::zeros(&[num_nodes, k]);
        for (a, col) in columns.iter().enumerate() {
            for (v, d) in col.iter().enumerate() {
                if let Some(d) = d {
                    matrix.set(v, a, 1.0 / (*d as f64 + 1.0));
                }
            }
        }
        Self { matrix }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let k = self.dim();
        out.push_str("node");
        for a in 1..=k {
            out.push_str(&format!(",anchor{a}"));
        }
        out.push('\n');
        for v in 0..self.matrix.rows() {
            out.push_str(&v.to_string());
            for x in self.matrix.row(v) {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_structural_features(graph: &Graph, anchors: &AnchorSet) -> StructuralFeatures {
    assert_eq!(
        graph.num_nodes(),
        anchors.num_nodes(),
        "anchors built for another graph"
    );
    let aug = Augmented::new(graph, anchors);
    let columns: Vec<_> = (0..anchors.k())
        .into_par_iter()
        .map(|a| aug.bfs(a))
        .collect();
    StructuralFeatures::from_distances(graph.num_nodes(), columns)
}

/// Baseline without virtual anchors: `k` distinct real nodes drawn uniformly
/// serve as anchors and distances use the original graph only.
pub fn in_graph_anchor_features(graph: &Graph, k: usize, seed: u64) -> Result<StructuralFeatures> {
    if k > graph.num_nodes() {
        return Err(TegError::InvalidConfig(format!(
            "{k} in-graph anchors requested from {} nodes",
            graph.num_nodes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, graph.num_nodes(), k).into_vec();
    let columns = picks.iter().map(|&s| graph_bfs(graph, s)).collect();
    Ok(StructuralFeatures::from_distances(
        graph.num_nodes(),
        columns,
    ))
}

/// Fraction of zero entries in the feature matrix.
pub fn zero_ratio(features: &StructuralFeatures) -> Result<f64> {
    let m = features.matrix();
    if m.cols() == 0 {
        return Err(TegError::NoAnchors);
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let zeros = m.data().iter().filter(|&&x| x == 0.0).count();
    Ok(zeros as f64 / m.len() as f64)
}

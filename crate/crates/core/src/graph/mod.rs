//! Attributed graphs, the text file format, class splits, label pools, and a
//! stochastic block model generator.

mod io;
mod pool;
mod sbm;
mod split;

pub use io::{load_graph, parse_graph, save_graph, to_text};
pub use pool::{restrict_pool, LabelPool, PoolProvenance, PoolRequirement};
pub use sbm::{generate_sbm, SbmConfig};
pub use split::{split_classes, ClassSplit};

use crate::error::{Result, TegError};
use crate::numerics::Tensor;

/// Undirected, unweighted graph with dense node features and one label per
/// node. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    /// Sorted, each pair stored once with `u < v`.
    edges: Vec<(usize, usize)>,
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
    adj_ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    /// Validates and normalizes the edge list: reversed and repeated pairs are
    /// merged, self-loops and out-of-range endpoints are rejected.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != num_nodes {
            return Err(TegError::DimensionMismatch(format!(
                "features shaped {:?} for {num_nodes} nodes",
                features.shape()
            )));
        }
        if !features.is_finite() {
            return Err(TegError::InvalidGraph("non-finite feature value".into()));
        }
        if labels.len() != num_nodes {
            return Err(TegError::DimensionMismatch(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(TegError::LabelOutOfRange {
                node,
                label: label.to_string(),
                num_classes,
            });
        }
        if let Some(names) = &class_names {
            if names.len() != num_classes {
                return Err(TegError::InvalidGraph(format!(
                    "{} class names for {num_classes} classes",
                    names.len()
                )));
            }
        }

        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(TegError::EndpointOutOfRange { u, v, num_nodes });
            }
            if u == v {
                return Err(TegError::InvalidGraph(format!("self-loop on node {u}")));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        list.dedup();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &list {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut adj_ptr = vec![0usize; num_nodes + 1];
        for i in 0..num_nodes {
            adj_ptr[i + 1] = adj_ptr[i] + degree[i];
        }
        let mut fill = adj_ptr.clone();
        let mut adj = vec![0usize; adj_ptr[num_nodes]];
        for &(u, v) in &list {
            adj[fill[u]] = v;
            fill[u] += 1;
            adj[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..num_nodes {
            adj[adj_ptr[i]..adj_ptr[i + 1]].sort_unstable();
        }

        Ok(Self {
            num_nodes,
            edges: list,
            features,
            labels,
            num_classes,
            class_names,
            adj_ptr,
            adj,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[self.adj_ptr[v]..self.adj_ptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj_ptr[v + 1] - self.adj_ptr[v]
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Node ids carrying label `c`, ascending.
    pub fn nodes_of_class(&self, c: usize) -> Vec<usize> {
        (0..self.num_nodes)
            .filter(|&v| self.labels[v] == c)
            .collect()
    }
}

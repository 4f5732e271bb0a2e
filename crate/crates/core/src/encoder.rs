//! Semantic encoder: a graph convolution over the original graph (anchors are
//! not part of it).

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TegError};
use crate::graph::Graph;
use crate::numerics::{Csr, Init, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
    pub layers: usize,
}

impl GcnConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim: 64,
            dropout: 0.5,
            layers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.layers == 0 {
            return Err(TegError::InvalidConfig(
                "gcn dims and layers must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TegError::InvalidConfig(format!(
                "gcn dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn weight_name(layer: usize) -> String {
        format!("gcn.w.{layer}")
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(Arc<Csr>);

impl NormalizedAdjacency {
    pub fn csr(&self) -> &Csr {
        &self.0
    }

    pub fn shared(&self) -> Arc<Csr> {
        Arc::clone(&self.0)
    }

    /// Same operator with node ids relabeled: new id `perm[v]` for old `v`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.csr();
        let mut trip = Vec::with_capacity(m.nnz());
        for r in 0..m.rows() {
            for (c, v) in m.row(r) {
                trip.push((perm[r], perm[c], v));
            }
        }
        Self(Arc::new(Csr::from_triplets(m.rows(), m.cols(), trip)))
    }
}

pub fn normalize_adjacency(graph: &Graph) -> NormalizedAdjacency {
    let n = graph.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((graph.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut trip = Vec::with_capacity(n + 2 * graph.num_edges());
    for v in 0..n {
        trip.push((v, v, inv_sqrt[v] * inv_sqrt[v]));
    }
    for &(u, v) in graph.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        trip.push((u, v, w));
        trip.push((v, u, w));
    }
    NormalizedAdjacency(Arc::new(Csr::from_triplets(n, n, trip)))
}

/// Glorot-initialized weights, one per layer; no biases.
pub fn init_gcn_params(store: &mut ParamStore, cfg: &GcnConfig) -> Result<()> {
    cfg.validate()?;
    for l in 0..cfg.layers {
        let fan_in = if l == 0 {
            cfg.input_dim
        } else {
            cfg.output_dim
        };
        store.add(
            &GcnConfig::weight_name(l),
            &[fan_in, cfg.output_dim],
            Init::GlorotUniform,
        )?;
    }
    Ok(())
}

/// `H = Â · dropout(X) · W` per layer, ReLU between layers and nothing after
/// the last one. Dropout only runs when an RNG is supplied.
pub fn gcn_forward(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    x: Var,
    store: &ParamStore,
    cfg: &GcnConfig,
    mut dropout_rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let mut h = x;
    for l in 0..cfg.layers {
        if l > 0 {
            h = tape.relu(h);
        }
        if let Some(rng) = dropout_rng.as_deref_mut() {
            h = tape.dropout(h, cfg.dropout, rng);
        }
        let w = tape.param(store, &GcnConfig::weight_name(l))?;
        let hw = tape.matmul(h, w)?;
        h = tape.sparse_matmul(adj.shared(), hw)?;
    }
    Ok(h)
}

/// Rows `rows` of the GCN output. With one layer only the features of the
/// rows' closed neighborhoods are touched; deeper stacks run on the whole
/// graph and gather.
pub fn gcn_forward_rows(
    tape: &mut Tape,
    adj: &NormalizedAdjacency,
    features: &Tensor,
    store: &ParamStore,
    cfg: &GcnConfig,
    rows: &[usize],
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    if cfg.layers != 1 {
        let x = tape.constant(features.clone());
        let h = gcn_forward(tape, adj, x, store, cfg, dropout_rng)?;
        return tape.gather_rows(h, rows.into());
    }
    let a = adj.csr();
    let mut cols: Vec<usize> = rows
        .iter()
        .flat_map(|&r| a.row(r).map(|(c, _)| c))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    let mut trip = Vec::new();
    for (i, &r) in rows.iter().enumerate() {
        for (c, v) in a.row(r) {
            let j = cols.binary_search(&c).expect("column collected above");
            trip.push((i, j, v));
        }
    }
    let sub = Arc::new(Csr::from_triplets(rows.len(), cols.len(), trip));
    let mut x = tape.constant(features.gather_rows(&cols));
    if let Some(rng) = dropout_rng {
        x = tape.dropout(x, cfg.dropout, rng);
    }
    let w = tape.param(store, &GcnConfig::weight_name(0))?;
    let xw = tape.matmul(x, w)?;
    tape.sparse_matmul(sub, xw)
}

/// Inference-mode embedding of every node, no dropout.
pub fn gcn_embed(
    adj: &NormalizedAdjacency,
    features: &Tensor,
    store: &ParamStore,
    cfg: &GcnConfig,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let h = gcn_forward(&mut tape, adj, x, store, cfg, None)?;
    Ok(tape.value(h).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(usize, usize)], f: usize) -> Graph {
        let feats = Tensor::new(
            &[n, f],
            (0..n * f).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        Graph::new(n, edges.iter().copied(), feats, vec![0; n], 1, None).unwrap()
    }

    #[test]
    fn isolated_node_unit_diagonal() {
        let a = normalize_adjacency(&g(3, &[(0, 1)], 1));
        assert_eq!(a.csr().get(2, 2), 1.0);
        assert_eq!(a.csr().row(2).count(), 1);
    }

    #[test]
    fn single_edge_halves() {
        let a = normalize_adjacency(&g(2, &[(0, 1)], 1)).csr().to_dense();
        for v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn star_center_to_leaf() {
        let a = normalize_adjacency(&g(4, &[(0, 1), (0, 2), (0, 3)], 1));
        let expected = 1.0 / (4.0f64 * 2.0).sqrt();
        for leaf in 1..4 {
            assert!((a.csr().get(0, leaf) - expected).abs() < 1e-15);
            assert!((a.csr().get(leaf, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_row_is_projected_features() {
        let graph = g(3, &[(0, 1)], 3);
        let adj = normalize_adjacency(&graph);
        let cfg = GcnConfig {
            output_dim: 2,
            ..GcnConfig::new(3)
        };
        let mut store = ParamStore::new(1);
        init_gcn_params(&mut store, &cfg).unwrap();
        let h = gcn_embed(&adj, graph.features(), &store, &cfg).unwrap();
        let xw = graph
            .features()
            .matmul(store.get("gcn.w.0").unwrap())
            .unwrap();
        assert_eq!(h.row(2), xw.row(2));
    }

    #[test]
    fn identity_weight_gives_propagated_features() {
        let graph = g(4, &[(0, 1), (1, 2)], 3);
        let adj = normalize_adjacency(&graph);
        let cfg = GcnConfig {
            output_dim: 3,
            ..GcnConfig::new(3)
        };
        let mut store = ParamStore::new(0);
        store.add_given("gcn.w.0", Tensor::identity(3)).unwrap();
        store.set("gcn.w.0", Tensor::identity(3)).unwrap();
        let h = gcn_embed(&adj, graph.features(), &store, &cfg).unwrap();
        let ax = adj.csr().matmul(graph.features()).unwrap();
        for (a, b) in h.data().iter().zip(ax.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn row_restricted_forward_matches_full() {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 5), (5, 6)];
        let graph = g(8, &edges, 4);
        let adj = normalize_adjacency(&graph);
        for layers in [1, 2] {
            let cfg = GcnConfig {
                output_dim: 3,
                layers,
                ..GcnConfig::new(4)
            };
            let mut store = ParamStore::new(2);
            init_gcn_params(&mut store, &cfg).unwrap();
            let full = gcn_embed(&adj, graph.features(), &store, &cfg).unwrap();
            let rows = [6, 2, 7, 0];
            let mut tape = Tape::new();
            let h = gcn_forward_rows(&mut tape, &adj, graph.features(), &store, &cfg, &rows, None)
                .unwrap();
            let want = full.gather_rows(&rows);
            for (a, b) in tape.value(h).data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(GcnConfig {
            dropout: 1.0,
            ..GcnConfig::new(3)
        }
        .validate()
        .is_err());
        assert!(GcnConfig {
            output_dim: 0,
            ..GcnConfig::new(3)
        }
        .validate()
        .is_err());
        assert!(GcnConfig::new(3).validate().is_ok());
    }
}

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teg::graph::Graph;
use teg::numerics::Tensor;
use teg::structural::AnchorSet;

/// Erdős–Rényi graph with `n` nodes and edge probability `p`, constant
/// dummy features and a single class.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges, Tensor::zeros(&[n, 1]), vec![0; n], 1, None).unwrap()
}

/// All-pairs hop distances by Floyd–Warshall over an explicit edge list.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in edges {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|x| (x < INF).then_some(x)).collect())
        .collect()
}

/// Edge list of the graph plus anchor vertices `n..n+k`, built from the
/// membership lists alone.
pub fn augmented_edges(graph: &Graph, anchors: &AnchorSet) -> Vec<(usize, usize)> {
    let n = graph.num_nodes();
    let mut edges = graph.edges().to_vec();
    for a in 0..anchors.k() {
        for &v in anchors.members(a) {
            edges.push((v, n + a));
        }
    }
    edges
}

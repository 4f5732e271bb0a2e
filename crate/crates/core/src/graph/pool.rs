use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassSplit, Graph};
use crate::error::{Result, TegError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolProvenance {
    pub class_fraction: f64,
    pub label_availability: f64,
    pub seed: u64,
}

/// Episode shape a pool has to support: `classes` distinct classes, each
/// with at least `nodes_per_class` (K + M) nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolRequirement {
    pub classes: usize,
    pub nodes_per_class: usize,
}

/// Nodes eligible for episode sampling, grouped by global class id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelPool {
    classes: BTreeMap<usize, Vec<usize>>,
    provenance: PoolProvenance,
}

impl LabelPool {
    /// Every labeled node of the given classes.
    pub fn full(graph: &Graph, classes: &[usize]) -> Self {
        let mut map: BTreeMap<usize, Vec<usize>> =
            classes.iter().map(|&c| (c, Vec::new())).collect();
        for v in 0..graph.num_nodes() {
            if let Some(list) = map.get_mut(&graph.label(v)) {
                list.push(v);
            }
        }
        Self {
            classes: map,
            provenance: PoolProvenance {
                class_fraction: 1.0,
                label_availability: 1.0,
                seed: 0,
            },
        }
    }

    pub fn provenance(&self) -> PoolProvenance {
        self.provenance
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.keys().copied()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn nodes(&self, class: usize) -> &[usize] {
        self.classes.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn total_nodes(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    /// Classes holding at least `min_nodes` nodes, ascending.
    pub fn eligible_classes(&self, min_nodes: usize) -> Vec<usize> {
        self.classes
            .iter()
            .filter(|(_, v)| v.len() >= min_nodes)
            .map(|(&c, _)| c)
            .collect()
    }

    pub fn check(&self, req: PoolRequirement) -> Result<()> {
        let eligible = self.eligible_classes(req.nodes_per_class).len();
        if eligible < req.classes {
            return Err(TegError::PoolTooSmall {
                need_classes: req.classes,
                need_nodes: req.nodes_per_class,
                eligible,
            });
        }
        Ok(())
    }
}

/// `ceil(fraction · n)` with a small slack so that products such as
/// `0.07 · 100` do not round up past the intended integer.
fn ceil_share(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Keeps `ceil(class_fraction · |base|)` base classes and
/// `ceil(label_availability · |class|)` nodes of each kept class.
///
/// Classes and nodes are taken as prefixes of seeded permutations, so the
/// result only ever shrinks when either knob shrinks.
pub fn restrict_pool(
    graph: &Graph,
    split: &ClassSplit,
    class_fraction: f64,
    label_availability: f64,
    seed: u64,
    req: PoolRequirement,
) -> Result<LabelPool> {
    for (name, v) in [
        ("class_fraction", class_fraction),
        ("label_availability", label_availability),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(TegError::InvalidConfig(format!(
                "{name} must lie in (0, 1], got {v}"
            )));
        }
    }
    let mut order = split.base.clone();
    order.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.truncate(ceil_share(class_fraction, order.len()));

    let full = LabelPool::full(graph, &order);
    let mut classes = BTreeMap::new();
    for &c in &order {
        let mut nodes = full.nodes(c).to_vec();
        let mut crng = ChaCha8Rng::seed_from_u64(seed);
        crng.set_stream(c as u64 + 1);
        nodes.shuffle(&mut crng);
        nodes.truncate(ceil_share(label_availability, nodes.len()));
        nodes.sort_unstable();
        classes.insert(c, nodes);
    }
    let pool = LabelPool {
        classes,
        provenance: PoolProvenance {
            class_fraction,
            label_availability,
            seed,
        },
    };
    pool.check(req)?;
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn graph(classes: usize, per_class: usize) -> Graph {
        let n = classes * per_class;
        let labels = (0..n).map(|v| v / per_class).collect();
        Graph::new(n, [], Tensor::zeros(&[n, 0]), labels, classes, None).unwrap()
    }

    fn req(classes: usize, nodes: usize) -> PoolRequirement {
        PoolRequirement {
            classes,
            nodes_per_class: nodes,
        }
    }

    #[test]
    fn identity_restriction() {
        let g = graph(6, 10);
        let split = ClassSplit::new(vec![0, 2, 4], vec![1], vec![3, 5], 6).unwrap();
        let p = restrict_pool(&g, &split, 1.0, 1.0, 3, req(2, 6)).unwrap();
        assert_eq!(p, {
            let mut f = LabelPool::full(&g, &split.base);
            f.provenance.seed = 3;
            f
        });
        assert_eq!(p.total_nodes(), 30);
    }

    #[test]
    fn hardest_cell_ten_percent_one_percent() {
        let g = graph(50, 1000);
        let split = ClassSplit::new((0..50).collect(), vec![], vec![], 50).unwrap();
        let p = restrict_pool(&g, &split, 0.1, 0.01, 0, req(5, 10)).unwrap();
        assert_eq!(p.num_classes(), 5);
        for c in p.classes() {
            assert_eq!(p.nodes(c).len(), 10);
            assert!(p.nodes(c).iter().all(|&v| g.label(v) == c));
        }
    }

    #[test]
    fn ceil_keeps_one_node() {
        assert_eq!(ceil_share(0.02, 40), 1);
        assert_eq!(ceil_share(0.07, 100), 7);
        assert_eq!(ceil_share(0.1, 50), 5);
        assert_eq!(ceil_share(1.0, 13), 13);
    }

    #[test]
    fn too_small_for_episode() {
        let g = graph(5, 40);
        let split = ClassSplit::new((0..5).collect(), vec![], vec![], 5).unwrap();
        let err = restrict_pool(&g, &split, 1.0, 0.02, 0, req(2, 2)).unwrap_err();
        assert!(matches!(err, TegError::PoolTooSmall { eligible: 0, .. }));
    }

    #[test]
    fn rejects_out_of_range_knobs() {
        let g = graph(2, 4);
        let split = ClassSplit::new(vec![0, 1], vec![], vec![], 2).unwrap();
        assert!(restrict_pool(&g, &split, 0.0, 1.0, 0, req(1, 1)).is_err());
        assert!(restrict_pool(&g, &split, 1.0, 1.5, 0, req(1, 1)).is_err());
    }

    proptest! {
        #[test]
        fn shrinking_never_adds_nodes(
            seed in any::<u64>(),
            f_hi in 0.05f64..=1.0, f_scale in 0.1f64..=1.0,
            a_hi in 0.05f64..=1.0, a_scale in 0.1f64..=1.0,
        ) {
            let g = graph(12, 30);
            let split = ClassSplit::new((0..12).collect(), vec![], vec![], 12).unwrap();
            let r = req(1, 1);
            let big = restrict_pool(&g, &split, f_hi, a_hi, seed, r).unwrap();
            let small = restrict_pool(&g, &split, f_hi * f_scale, a_hi * a_scale, seed, r).unwrap();
            for c in small.classes() {
                let outer = big.nodes(c);
                prop_assert!(!outer.is_empty());
                prop_assert!(small.nodes(c).iter().all(|v| outer.contains(v)));
            }
            let again = restrict_pool(&g, &split, f_hi, a_hi, seed, r).unwrap();
            prop_assert_eq!(big, again);
        }
    }
}

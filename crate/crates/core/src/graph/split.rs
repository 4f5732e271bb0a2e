use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Result, TegError};

/// Disjoint base (meta-train), validation, and novel (meta-test) classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub base: Vec<usize>,
    pub valid: Vec<usize>,
    pub novel: Vec<usize>,
}

impl ClassSplit {
    pub fn new(
        base: Vec<usize>,
        valid: Vec<usize>,
        novel: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut all: Vec<usize> = base.iter().chain(&valid).chain(&novel).copied().collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != total {
            return Err(TegError::InvalidConfig("class split sets overlap".into()));
        }
        if all.last().is_some_and(|&c| c >= num_classes) {
            return Err(TegError::InvalidConfig(
                "class split names an unknown class".into(),
            ));
        }
        if base.is_empty() {
            return Err(TegError::InvalidConfig("base class set is empty".into()));
        }
        Ok(Self { base, valid, novel })
    }
}

/// Shuffles the class ids with `seed` and cuts consecutive runs of the
/// requested sizes. Each returned set is sorted.
pub fn split_classes(
    graph: &Graph,
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<ClassSplit> {
    let (nb, nv, nn) = counts;
    let total = graph.num_classes();
    if nb + nv + nn > total {
        return Err(TegError::InsufficientClasses {
            requested: nb + nv + nn,
            available: total,
        });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| {
        let mut v = order[range].to_vec();
        v.sort_unstable();
        v
    };
    let base = take(0..nb);
    let valid = take(nb..nb + nv);
    let novel = take(nb + nv..nb + nv + nn);
    Ok(ClassSplit { base, valid, novel })
}

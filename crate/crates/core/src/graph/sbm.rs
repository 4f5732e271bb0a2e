use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Result, TegError};
use crate::numerics::Tensor;

/// Planted-partition graph with Gaussian class-conditioned features.
///
/// Node `v` belongs to class `v / nodes_per_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub class_mean_scale: f64,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_classes: 15,
            nodes_per_class: 60,
            p_in: 0.1,
            p_out: 0.005,
            feature_dim: 16,
            class_mean_scale: 1.0,
            feature_noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.nodes_per_class == 0 || self.feature_dim == 0 {
            return Err(TegError::InvalidConfig(
                "sbm counts must be at least 1".into(),
            ));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(TegError::InvalidConfig(format!(
                "sbm needs 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(self.class_mean_scale >= 0.0 && self.feature_noise_sigma >= 0.0) {
            return Err(TegError::InvalidConfig(
                "sbm scales must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_classes * cfg.nodes_per_class;
    let class_of = |v: usize| v / cfg.nodes_per_class;

    let mut edge_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if class_of(u) == class_of(v) {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if edge_rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut feat_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    feat_rng.set_stream(1);
    let f = cfg.feature_dim;
    let means: Vec<f64> = (0..cfg.num_classes * f)
        .map(|_| cfg.class_mean_scale * feat_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut data = Vec::with_capacity(n * f);
    for v in 0..n {
        let c = class_of(v);
        for j in 0..f {
            let noise: f64 = feat_rng.sample(StandardNormal);
            data.push(means[c * f + j] + cfg.feature_noise_sigma * noise);
        }
    }

    let labels = (0..n).map(class_of).collect();
    Graph::new(
        n,
        edges,
        Tensor::new(&[n, f], data)?,
        labels,
        cfg.num_classes,
        None,
    )
}

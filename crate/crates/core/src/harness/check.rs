use super::config::{DataSource, RunConfig};
use super::model::{Prepared, TegModel};
use crate::episodes::{sample_task, EpisodeConfig, TaskShape};
use crate::error::Result;
use crate::graph::{LabelPool, SbmConfig};
use crate::numerics::{grad_check, GradCheckReport};

/// Settings of the toy model used for the end-to-end gradient check:
/// `d_l = 4`, `d_s = 3`, 2-way 1-shot 1-query, dropout off.
pub fn toy_config(seed: u64) -> RunConfig {
    RunConfig {
        data: DataSource::Synthetic(SbmConfig {
            num_classes: 2,
            nodes_per_class: 5,
            p_in: 0.6,
            p_out: 0.1,
            feature_dim: 5,
            class_mean_scale: 1.0,
            feature_noise_sigma: 0.5,
            seed,
        }),
        split: (2, 0, 0),
        episodes: EpisodeConfig {
            m_query: 1,
            ..EpisodeConfig::new(2, 1)
        },
        gcn_dim: 4,
        gcn_dropout: 0.0,
        anchors: 3,
        egnn_hidden: 8,
        message_dim: 8,
        seed,
        ..RunConfig::default()
    }
}

/// Central-difference check of every parameter of the full combined loss on
/// one toy episode.
pub fn toy_grad_check(seed: u64, step: f64) -> Result<GradCheckReport> {
    let cfg = toy_config(seed);
    let data = Prepared::new(&cfg)?;
    let model = TegModel::new(&cfg, data.graph.feature_dim(), seed)?;
    let pool = LabelPool::full(&data.graph, &data.split.base);
    let task = sample_task(&pool, TaskShape::new(2, 1, 1)?, seed)?;
    grad_check(
        |store, tape| {
            Ok(model
                .episode_loss_with(store, tape, &data, &task, None)?
                .total)
        },
        &model.store,
        step,
        usize::MAX,
        seed,
    )
}

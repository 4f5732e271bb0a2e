use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::model::{Prepared, TegModel};
use crate::episodes::{predict, sample_task, MetaTask, TaskShape};
use crate::error::{Result, TegError};
use crate::graph::LabelPool;
use crate::numerics::Tensor;

/// Accuracy per seed (or per independent run) with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of `accuracies`.
    pub std: f64,
    /// Episodes behind each accuracy.
    pub episodes: usize,
    pub config_hash: String,
}

#[derive(Serialize)]
struct SeedRecord<'a> {
    run: usize,
    seed: u64,
    accuracy: f64,
    episodes: usize,
    config_hash: &'a str,
}

impl EvalReport {
    pub fn new(
        seeds: Vec<u64>,
        accuracies: Vec<f64>,
        episodes: usize,
        config_hash: String,
    ) -> Self {
        let n = accuracies.len().max(1) as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            seeds,
            accuracies,
            mean,
            std: var.sqrt(),
            episodes,
            config_hash,
        }
    }

    /// One JSON object per seed.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (run, (&seed, &accuracy)) in self.seeds.iter().zip(&self.accuracies).enumerate() {
            let rec = SeedRecord {
                run,
                seed,
                accuracy,
                episodes: self.episodes,
                config_hash: &self.config_hash,
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "runs,episodes,mean,std,config_hash\n{},{},{},{},{}\n",
            self.accuracies.len(),
            self.episodes,
            self.mean,
            self.std,
            self.config_hash
        )
    }
}

/// Thread count for evaluation fan-out, from `TEG_THREADS` when set.
pub fn eval_threads() -> usize {
    std::env::var("TEG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

pub(crate) fn eval_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(eval_threads())
            .build()
            .expect("thread pool")
    })
}

/// Outcome of one evaluated episode, also the record of episode dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task: MetaTask,
    pub predictions: Vec<usize>,
    pub correct: usize,
}

impl EpisodeResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain record serializes")
    }
}

/// Classifies the queries of each task with the model; `h_all` holds the
/// inference-mode GCN output of every node.
pub fn run_episodes(
    model: &TegModel,
    data: &Prepared,
    h_all: &Tensor,
    tasks: &[MetaTask],
) -> Result<Vec<EpisodeResult>> {
    eval_pool().install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let h = h_all.gather_rows(&task.nodes());
                let lp = model.query_log_probs(&h, &data.task_props(task), task)?;
                let predictions = predict(&lp);
                let correct = predictions
                    .iter()
                    .zip(&task.query_labels)
                    .filter(|(p, t)| p == t)
                    .count();
                Ok(EpisodeResult {
                    task: task.clone(),
                    predictions,
                    correct,
                })
            })
            .collect()
    })
}

pub fn sample_tasks(
    pool: &LabelPool,
    shape: TaskShape,
    episodes: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<MetaTask>> {
    (0..episodes as u64)
        .map(|i| sample_task(pool, shape, derive_seed(seed, tag, i)))
        .collect()
}

pub fn accuracy(results: &[EpisodeResult]) -> f64 {
    let correct: usize = results.iter().map(|r| r.correct).sum();
    let total: usize = results.iter().map(|r| r.task.query.len()).sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Accuracy over `episodes` tasks from `pool` for each seed. Dropout is off
/// and the parameters are only read.
pub fn evaluate(
    model: &TegModel,
    data: &Prepared,
    pool: &LabelPool,
    shape: TaskShape,
    episodes: usize,
    seeds: &[u64],
    config_hash: &str,
) -> Result<EvalReport> {
    pool.check(shape.requirement())?;
    if episodes == 0 {
        return Err(TegError::InvalidConfig(
            "evaluation needs at least one episode".into(),
        ));
    }
    let h_all = model.embed_nodes(data)?;
    let mut accs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let tasks = sample_tasks(pool, shape, episodes, seed, "eval")?;
        accs.push(accuracy(&run_episodes(model, data, &h_all, &tasks)?));
    }
    Ok(EvalReport::new(
        seeds.to_vec(),
        accs,
        episodes,
        config_hash.to_string(),
    ))
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, RunConfig};
use super::eval::{accuracy, run_episodes, sample_tasks, EvalReport};
use super::model::{Prepared, TegModel};
use crate::episodes::sample_task;
use crate::error::{Result, TegError};
use crate::graph::{restrict_pool, LabelPool};
use crate::numerics::{adam_step, AdamState, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub episode: usize,
    pub loss: f64,
    pub loss_n: Option<f64>,
    pub loss_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub episode: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    pub validations: Vec<ValidationRecord>,
    /// Episode count after which the returned parameters were taken.
    pub best_episode: Option<usize>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("plain record serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters, or the final ones without validation.
    pub model: TegModel,
    /// Optimizer state after the last episode.
    pub adam: AdamState,
    pub log: TrainLog,
}

/// Episodic meta-training on the restricted base-class pool with periodic
/// validation on validation-class episodes.
pub fn train(cfg: &RunConfig, data: &Prepared, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let shape = cfg.episodes.train_shape();
    let pool = restrict_pool(
        &data.graph,
        &data.split,
        cfg.class_fraction,
        cfg.label_availability,
        derive_seed(seed, "pool", 0),
        shape.requirement(),
    )?;

    let valid_pool = LabelPool::full(&data.graph, &data.split.valid);
    let val_shape = cfg.episodes.eval_shape();
    let val_tasks = if cfg.val_episodes > 0 && valid_pool.check(val_shape.requirement()).is_ok() {
        sample_tasks(&valid_pool, val_shape, cfg.val_episodes, seed, "val")?
    } else {
        Vec::new()
    };

    let mut model = TegModel::new(cfg, data.graph.feature_dim(), derive_seed(seed, "init", 0))?;
    let mut adam = AdamState::new(cfg.adam(), &model.store);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "dropout", 0));
    let mut log = TrainLog::default();
    let mut best: Option<(f64, TegModel)> = None;

    for episode in 0..cfg.episodes.episodes_train {
        let task = sample_task(&pool, shape, derive_seed(seed, "train", episode as u64))?;
        let mut tape = Tape::new();
        let loss = model
            .episode_loss(&mut tape, data, &task, Some(&mut dropout_rng))
            .map_err(|e| match e {
                TegError::NonFinite(_) => TegError::NonFiniteLoss { episode },
                other => other,
            })?;
        let total = tape.value(loss.total).item();
        if !total.is_finite() {
            return Err(TegError::NonFiniteLoss { episode });
        }
        log.records.push(TrainRecord {
            episode,
            loss: total,
            loss_n: loss.loss_n.map(|v| tape.value(v).item()),
            loss_g: loss.loss_g.map(|v| tape.value(v).item()),
        });
        let grads = tape.backward(loss.total, &model.store)?;
        adam_step(&mut model.store, &grads, &mut adam)?;

        let done = episode + 1;
        if !val_tasks.is_empty()
            && (done % cfg.val_every == 0 || done == cfg.episodes.episodes_train)
        {
            let h_all = model.embed_nodes(data)?;
            let acc = accuracy(&run_episodes(&model, data, &h_all, &val_tasks)?);
            log.validations.push(ValidationRecord {
                episode: done,
                accuracy: acc,
            });
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.clone()));
                log.best_episode = Some(done);
            }
        }
    }
    let model = match best {
        Some((_, m)) => m,
        None => {
            log.best_episode = Some(cfg.episodes.episodes_train);
            model
        }
    };
    Ok(TrainOutcome { model, adam, log })
}

/// Everything one `train` + `eval` cycle over all configured runs produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub logs: Vec<TrainLog>,
}

/// `eval_seeds` independent runs, each training from its own seed and
/// evaluating `episodes_eval` novel-class episodes.
pub fn run_experiment(cfg: &RunConfig, data: &Prepared) -> Result<ExperimentOutcome> {
    let novel = LabelPool::full(&data.graph, &data.split.novel);
    let shape = cfg.episodes.eval_shape();
    novel.check(shape.requirement())?;
    let mut seeds = Vec::new();
    let mut accs = Vec::new();
    let mut logs = Vec::new();
    for run in 0..cfg.episodes.eval_seeds {
        let seed = derive_seed(cfg.seed, "run", run as u64);
        let out = train(cfg, data, seed)?;
        let rep = super::eval::evaluate(
            &out.model,
            data,
            &novel,
            shape,
            cfg.episodes.episodes_eval,
            &[seed],
            "",
        )?;
        seeds.push(seed);
        accs.push(rep.accuracies[0]);
        logs.push(out.log);
    }
    Ok(ExperimentOutcome {
        report: EvalReport::new(seeds, accs, cfg.episodes.episodes_eval, cfg.hash()),
        logs,
    })
}

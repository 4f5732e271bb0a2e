//! Episode sampling and prototype classification.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TegError};
use crate::graph::{LabelPool, PoolRequirement};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskShape {
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
}

impl TaskShape {
    pub fn new(n_way: usize, k_shot: usize, m_query: usize) -> Result<Self> {
        let s = Self {
            n_way,
            k_shot,
            m_query,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.m_query < 1 {
            return Err(TegError::InvalidConfig(format!(
                "episode shape needs N >= 2, K >= 1, M >= 1, got {}-way {}-shot {}-query",
                self.n_way, self.k_shot, self.m_query
            )));
        }
        Ok(())
    }

    pub fn num_support(&self) -> usize {
        self.n_way * self.k_shot
    }

    pub fn num_query(&self) -> usize {
        self.n_way * self.m_query
    }

    pub fn num_nodes(&self) -> usize {
        self.num_support() + self.num_query()
    }

    pub fn requirement(&self) -> PoolRequirement {
        PoolRequirement {
            classes: self.n_way,
            nodes_per_class: self.k_shot + self.m_query,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
    /// Way used during meta-training; may be lower than `n_way`.
    pub train_way: usize,
    pub episodes_train: usize,
    pub episodes_eval: usize,
    pub eval_seeds: usize,
    pub gamma: f64,
}

impl EpisodeConfig {
    pub fn new(n_way: usize, k_shot: usize) -> Self {
        Self {
            n_way,
            k_shot,
            m_query: 5,
            train_way: n_way,
            episodes_train: 500,
            episodes_eval: 50,
            eval_seeds: 5,
            gamma: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eval_shape().validate()?;
        self.train_shape().validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(TegError::InvalidConfig(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.eval_seeds == 0 {
            return Err(TegError::InvalidConfig("eval_seeds must be >= 1".into()));
        }
        Ok(())
    }

    pub fn eval_shape(&self) -> TaskShape {
        TaskShape {
            n_way: self.n_way,
            k_shot: self.k_shot,
            m_query: self.m_query,
        }
    }

    pub fn train_shape(&self) -> TaskShape {
        TaskShape {
            n_way: self.train_way,
            ..self.eval_shape()
        }
    }
}

/// One episode. Supports come class by class (`K` per class), then queries
/// (`M` per class); local class `c` stands for global class `origin_classes[c]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaTask {
    pub shape: TaskShape,
    pub support: Vec<usize>,
    pub support_labels: Vec<usize>,
    pub query: Vec<usize>,
    pub query_labels: Vec<usize>,
    pub origin_classes: Vec<usize>,
}

impl MetaTask {
    /// Supports followed by queries, the row order used by the embedder.
    pub fn nodes(&self) -> Vec<usize> {
        self.support.iter().chain(&self.query).copied().collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.support.len() + self.query.len()
    }
}

/// Classes are drawn without replacement among those holding at least
/// `K + M` pool nodes, then `K + M` distinct nodes per class.
pub fn sample_task(pool: &LabelPool, shape: TaskShape, seed: u64) -> Result<MetaTask> {
    shape.validate()?;
    let per_class = shape.k_shot + shape.m_query;
    let eligible = pool.eligible_classes(per_class);
    if eligible.len() < shape.n_way {
        return Err(TegError::PoolTooSmall {
            need_classes: shape.n_way,
            need_nodes: per_class,
            eligible: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<usize> = sample(&mut rng, eligible.len(), shape.n_way)
        .into_iter()
        .map(|i| eligible[i])
        .collect();

    let mut task = MetaTask {
        shape,
        support: Vec::with_capacity(shape.num_support()),
        support_labels: Vec::with_capacity(shape.num_support()),
        query: Vec::with_capacity(shape.num_query()),
        query_labels: Vec::with_capacity(shape.num_query()),
        origin_classes: classes.clone(),
    };
    for (local, &c) in classes.iter().enumerate() {
        let nodes = pool.nodes(c);
        let picked = sample(&mut rng, nodes.len(), per_class).into_vec();
        for (i, &p) in picked.iter().enumerate() {
            if i < shape.k_shot {
                task.support.push(nodes[p]);
                task.support_labels.push(local);
            } else {
                task.query.push(nodes[p]);
                task.query_labels.push(local);
            }
        }
    }
    Ok(task)
}

/// Per-class mean of support rows.
pub fn prototypes(support: &Tensor, labels: &[usize], num_classes: usize) -> Result<Tensor> {
    if labels.len() != support.rows() {
        return Err(TegError::DimensionMismatch(format!(
            "{} labels for {} support rows",
            labels.len(),
            support.rows()
        )));
    }
    let d = support.cols();
    let mut out = Tensor::zeros(&[num_classes, d]);
    let mut counts = vec![0usize; num_classes];
    for (r, &c) in labels.iter().enumerate() {
        if c >= num_classes {
            return Err(TegError::DimensionMismatch(format!(
                "support label {c} >= {num_classes}"
            )));
        }
        counts[c] += 1;
        for (o, v) in out.row_mut(c).iter_mut().zip(support.row(r)) {
            *o += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(TegError::InvalidConfig(format!(
                "class {c} has no support rows"
            )));
        }
        for o in out.row_mut(c) {
            *o /= n as f64;
        }
    }
    Ok(out)
}

/// `log softmax(−‖z − P_c‖²)` per query row.
pub fn class_log_probs(queries: &Tensor, protos: &Tensor) -> Result<Tensor> {
    Ok(queries
        .pairwise_sqdist(protos)?
        .map(|d| -d)
        .log_softmax_rows())
}

pub fn class_probs(queries: &Tensor, protos: &Tensor) -> Result<Tensor> {
    Ok(class_log_probs(queries, protos)?.map(f64::exp))
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// `−Σ_q log p(y_q)`.
pub fn nll(log_probs: &Tensor, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(r, &c)| -log_probs.get(r, c))
        .sum()
}

/// Query log-probabilities from task-ordered embeddings (supports first).
pub fn proto_log_probs(tape: &mut Tape, embeddings: Var, task: &MetaTask) -> Result<Var> {
    let ns = task.support.len();
    let nt = task.num_nodes();
    if tape.value(embeddings).rows() != nt {
        return Err(TegError::DimensionMismatch(format!(
            "embedding has {} rows for a {nt}-node task",
            tape.value(embeddings).rows()
        )));
    }
    let support_idx: Arc<[usize]> = (0..ns).collect();
    let query_idx: Arc<[usize]> = (ns..nt).collect();
    let support = tape.gather_rows(embeddings, support_idx)?;
    let summed = tape.scatter_add_rows(
        support,
        task.support_labels.as_slice().into(),
        task.shape.n_way,
    )?;
    let protos = tape.scale(summed, 1.0 / task.shape.k_shot as f64);
    let queries = tape.gather_rows(embeddings, query_idx)?;
    let d = tape.pairwise_sqdist(queries, protos)?;
    let neg = tape.scale(d, -1.0);
    Ok(tape.log_softmax(neg))
}

/// Summed query NLL of prototype classification; serves as both `L_N`
/// (on embedder outputs) and `L_G` (on graph-embedder outputs).
pub fn proto_loss(tape: &mut Tape, embeddings: Var, task: &MetaTask) -> Result<Var> {
    let lp = proto_log_probs(tape, embeddings, task)?;
    tape.nll(lp, task.query_labels.as_slice().into())
}

/// `γ·L_N + (1−γ)·L_G`.
pub fn total_loss(tape: &mut Tape, loss_n: Var, loss_g: Var, gamma: f64) -> Result<Var> {
    let a = tape.scale(loss_n, gamma);
    let b = tape.scale(loss_g, 1.0 - gamma);
    tape.add(a, b)
}

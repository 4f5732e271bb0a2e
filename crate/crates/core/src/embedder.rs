//! E(n)-equivariant task embedder.
//!
//! Coordinates are the semantic embeddings of the episode's nodes, properties
//! their structural descriptors. Each layer computes edge messages from the
//! two endpoint properties and the squared coordinate distance, moves every
//! coordinate along its difference vectors, and refreshes properties from
//! the summed messages.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::episodes::MetaTask;
use crate::error::{Result, TegError};
use crate::numerics::{Init, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskGraphMode {
    /// Every pair of task nodes, query pairs included.
    #[default]
    Complete,
    /// Support–support and support–query pairs only.
    Bipartite,
}

impl FromStr for TaskGraphMode {
    type Err = TegError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Self::Complete),
            "bipartite" => Ok(Self::Bipartite),
            other => Err(TegError::InvalidConfig(format!(
                "unknown task graph mode {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for TaskGraphMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Complete => "complete",
            Self::Bipartite => "bipartite",
        })
    }
}

/// Directed edge list over local task indices: supports first, then queries.
/// Edge `e` carries a message from `src[e]` into `dst[e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    num_nodes: usize,
    num_support: usize,
    mode: TaskGraphMode,
    dst: Arc<[usize]>,
    src: Arc<[usize]>,
}

impl TaskGraph {
    pub fn new(num_support: usize, num_query: usize, mode: TaskGraphMode) -> Result<Self> {
        let n = num_support + num_query;
        if n < 2 {
            return Err(TegError::InvalidConfig(format!(
                "task graph needs at least 2 nodes, got {n}"
            )));
        }
        let mut dst = Vec::new();
        let mut src = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let both_query = i >= num_support && j >= num_support;
                if mode == TaskGraphMode::Bipartite && both_query {
                    continue;
                }
                dst.push(i);
                src.push(j);
            }
        }
        Ok(Self {
            num_nodes: n,
            num_support,
            mode,
            dst: dst.into(),
            src: src.into(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_support(&self) -> usize {
        self.num_support
    }

    pub fn mode(&self) -> TaskGraphMode {
        self.mode
    }

    pub fn num_edges(&self) -> usize {
        self.dst.len()
    }

    /// Normalizer of the coordinate update, `|T| − 1` in both modes.
    pub fn normalizer(&self) -> f64 {
        (self.num_nodes - 1) as f64
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.dst
            .iter()
            .zip(self.src.iter())
            .filter(|(&d, _)| d == i)
            .map(|(_, &s)| s)
            .collect()
    }
}

pub fn build_task_graph(task: &MetaTask, mode: TaskGraphMode) -> Result<TaskGraph> {
    TaskGraph::new(task.support.len(), task.query.len(), mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgnnConfig {
    pub layers: usize,
    /// Width of the hidden layers of all three MLPs.
    pub hidden_dim: usize,
    pub message_dim: usize,
    /// Property width, equal to the number of anchors.
    pub prop_dim: usize,
}

impl EgnnConfig {
    pub fn new(prop_dim: usize) -> Self {
        Self {
            layers: 2,
            hidden_dim: 64,
            message_dim: 64,
            prop_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.message_dim == 0 {
            return Err(TegError::InvalidConfig("egnn widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `(name, fan_in, fan_out)` of every linear map in layer `l`.
    fn linears(&self, l: usize) -> Vec<(String, usize, usize)> {
        let (h, m, s) = (self.hidden_dim, self.message_dim, self.prop_dim);
        [
            ("phi_m.0", 2 * s + 1, h),
            ("phi_m.1", h, m),
            ("phi_l.0", m, h),
            ("phi_l.1", h, h),
            ("phi_l.2", h, 1),
            ("phi_s.0", s + m, h),
            ("phi_s.1", h, s),
        ]
        .into_iter()
        .map(|(name, i, o)| (format!("egnn.{l}.{name}"), i, o))
        .collect()
    }
}

pub fn init_egnn_params(store: &mut ParamStore, cfg: &EgnnConfig) -> Result<()> {
    cfg.validate()?;
    for l in 0..cfg.layers {
        for (name, fan_in, fan_out) in cfg.linears(l) {
            store.add(
                &format!("{name}.w"),
                &[fan_in, fan_out],
                Init::GlorotUniform,
            )?;
            store.add(&format!("{name}.b"), &[1, fan_out], Init::Zeros)?;
        }
    }
    Ok(())
}

fn linear(tape: &mut Tape, store: &ParamStore, x: Var, name: &str) -> Result<Var> {
    let w = tape.param(store, &format!("{name}.w"))?;
    let b = tape.param(store, &format!("{name}.b"))?;
    tape.affine(x, w, b)
}

/// Batched messages: row `e` is `φ_m(s_i[e] ‖ s_j[e] ‖ sqdist[e])`.
pub fn egnn_message(
    tape: &mut Tape,
    store: &ParamStore,
    layer: usize,
    s_i: Var,
    s_j: Var,
    sqdist: Var,
) -> Result<Var> {
    if tape.value(s_i).shape() != tape.value(s_j).shape() || tape.value(sqdist).cols() != 1 {
        return Err(TegError::DimensionMismatch(format!(
            "egnn_message: properties {:?} / {:?}, distances {:?}",
            tape.value(s_i).shape(),
            tape.value(s_j).shape(),
            tape.value(sqdist).shape()
        )));
    }
    let input = tape.concat(&[s_i, s_j, sqdist])?;
    let h = linear(tape, store, input, &format!("egnn.{layer}.phi_m.0"))?;
    let h = tape.silu(h);
    let m = linear(tape, store, h, &format!("egnn.{layer}.phi_m.1"))?;
    Ok(tape.silu(m))
}

fn phi_l(tape: &mut Tape, store: &ParamStore, layer: usize, m: Var) -> Result<Var> {
    let h = linear(tape, store, m, &format!("egnn.{layer}.phi_l.0"))?;
    let h = tape.silu(h);
    let h = linear(tape, store, h, &format!("egnn.{layer}.phi_l.1"))?;
    linear(tape, store, h, &format!("egnn.{layer}.phi_l.2"))
}

fn phi_s(tape: &mut Tape, store: &ParamStore, layer: usize, x: Var) -> Result<Var> {
    let h = linear(tape, store, x, &format!("egnn.{layer}.phi_s.0"))?;
    let h = tape.silu(h);
    linear(tape, store, h, &format!("egnn.{layer}.phi_s.1"))
}

/// One message-passing layer; returns `(coords', props')`.
pub fn egnn_layer(
    tape: &mut Tape,
    store: &ParamStore,
    layer: usize,
    coords: Var,
    props: Var,
    tg: &TaskGraph,
) -> Result<(Var, Var)> {
    let n = tg.num_nodes;
    let (cv, pv) = (tape.value(coords), tape.value(props));
    if cv.rows() != n || pv.rows() != n {
        return Err(TegError::DimensionMismatch(format!(
            "egnn_layer: task has {n} nodes, coords {:?}, props {:?}",
            cv.shape(),
            pv.shape()
        )));
    }
    let x_i = tape.gather_rows(coords, Arc::clone(&tg.dst))?;
    let x_j = tape.gather_rows(coords, Arc::clone(&tg.src))?;
    let diff = tape.sub(x_i, x_j)?;
    let sq = tape.square(diff);
    let sqdist = tape.sum_rows(sq);
    let s_i = tape.gather_rows(props, Arc::clone(&tg.dst))?;
    let s_j = tape.gather_rows(props, Arc::clone(&tg.src))?;
    let m = egnn_message(tape, store, layer, s_i, s_j, sqdist)?;

    let w = phi_l(tape, store, layer, m)?;
    let moves = tape.mul_col(diff, w)?;
    let summed = tape.scatter_add_rows(moves, Arc::clone(&tg.dst), n)?;
    let shift = tape.scale(summed, 1.0 / tg.normalizer());
    let coords_next = tape.add(coords, shift)?;

    let m_i = tape.scatter_add_rows(m, Arc::clone(&tg.dst), n)?;
    let s_in = tape.concat(&[props, m_i])?;
    let props_next = phi_s(tape, store, layer, s_in)?;

    for (what, v) in [("coordinates", coords_next), ("properties", props_next)] {
        if !tape.value(v).is_finite() {
            return Err(TegError::NonFinite(format!("egnn layer {layer} {what}")));
        }
    }
    Ok((coords_next, props_next))
}

/// `layers` successive applications of [`egnn_layer`].
pub fn embed_task(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &EgnnConfig,
    coords: Var,
    props: Var,
    tg: &TaskGraph,
) -> Result<(Var, Var)> {
    let mut state = (coords, props);
    for l in 0..cfg.layers {
        state = egnn_layer(tape, store, l, state.0, state.1, tg)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEmbedding {
    pub coords: Tensor,
    pub props: Tensor,
}

/// Tape-free convenience wrapper around [`embed_task`].
pub fn embed_task_values(
    store: &ParamStore,
    cfg: &EgnnConfig,
    coords: &Tensor,
    props: &Tensor,
    tg: &TaskGraph,
) -> Result<TaskEmbedding> {
    let mut tape = Tape::new();
    let c = tape.constant(coords.clone());
    let p = tape.constant(props.clone());
    let (zc, zp) = embed_task(&mut tape, store, cfg, c, p, tg)?;
    Ok(TaskEmbedding {
        coords: tape.value(zc).clone(),
        props: tape.value(zp).clone(),
    })
}

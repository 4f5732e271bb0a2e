use rand::RngCore;

use super::config::{derive_seed, DataSource, RunConfig};
use crate::embedder::{embed_task, init_egnn_params, EgnnConfig, TaskGraph, TaskGraphMode};
use crate::encoder::{
    gcn_embed, gcn_forward_rows, init_gcn_params, normalize_adjacency, GcnConfig,
    NormalizedAdjacency,
};
use crate::episodes::{proto_log_probs, proto_loss, total_loss, MetaTask};
use crate::error::{Result, TegError};
use crate::graph::{generate_sbm, load_graph, split_classes, ClassSplit, Graph};
use crate::numerics::{ParamStore, Tape, Tensor, Var};
use crate::structural::{attach_anchors, build_structural_features, AnchorSet, StructuralFeatures};

/// Per-dataset state shared by every run: the graph, its class split, the
/// normalized adjacency and the anchor distance features.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: Graph,
    pub split: ClassSplit,
    pub adj: NormalizedAdjacency,
    pub anchors: AnchorSet,
    pub structural: StructuralFeatures,
}

impl Prepared {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let graph = match &cfg.data {
            DataSource::Synthetic(sbm) => generate_sbm(sbm)?,
            DataSource::File(path) => load_graph(path)?,
        };
        Self::from_graph(graph, cfg)
    }

    pub fn from_graph(graph: Graph, cfg: &RunConfig) -> Result<Self> {
        let split = split_classes(&graph, cfg.split, derive_seed(cfg.seed, "split", 0))?;
        let anchors = attach_anchors(&graph, cfg.anchors, derive_seed(cfg.seed, "anchors", 0));
        let structural = build_structural_features(&graph, &anchors);
        let adj = normalize_adjacency(&graph);
        Ok(Self {
            graph,
            split,
            adj,
            anchors,
            structural,
        })
    }

    /// Structural rows of the task nodes, supports first.
    pub fn task_props(&self, task: &MetaTask) -> Tensor {
        self.structural.matrix().gather_rows(&task.nodes())
    }
}

/// Loss terms of one episode; `loss_n`/`loss_g` are absent when their
/// weight in the objective is zero.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeLoss {
    pub total: Var,
    pub loss_n: Option<Var>,
    pub loss_g: Option<Var>,
}

/// GCN weights plus task-embedder weights and the settings needed to use
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct TegModel {
    pub store: ParamStore,
    pub gcn: GcnConfig,
    pub egnn: EgnnConfig,
    pub gamma: f64,
    pub mode: TaskGraphMode,
}

impl TegModel {
    pub fn new(cfg: &RunConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        let gcn = GcnConfig {
            input_dim: feature_dim,
            output_dim: cfg.gcn_dim,
            dropout: cfg.gcn_dropout,
            layers: cfg.gcn_layers,
        };
        let egnn = EgnnConfig {
            layers: cfg.egnn_layers,
            hidden_dim: cfg.egnn_hidden,
            message_dim: cfg.message_dim,
            prop_dim: cfg.anchors,
        };
        let mut store = ParamStore::new(seed);
        init_gcn_params(&mut store, &gcn)?;
        init_egnn_params(&mut store, &egnn)?;
        Ok(Self {
            store,
            gcn,
            egnn,
            gamma: cfg.episodes.gamma,
            mode: cfg.task_graph,
        })
    }

    /// Whether predictions go through the task embedder. At `γ = 0` the
    /// model is a plain prototype network on GCN outputs.
    pub fn uses_embedder(&self) -> bool {
        self.gamma > 0.0
    }

    /// Training objective of one episode; dropout runs when `rng` is given.
    pub fn episode_loss(
        &self,
        tape: &mut Tape,
        data: &Prepared,
        task: &MetaTask,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<EpisodeLoss> {
        self.episode_loss_with(&self.store, tape, data, task, rng)
    }

    /// [`TegModel::episode_loss`] with the parameters taken from `store`,
    /// which must have the layout of `self.store`.
    pub fn episode_loss_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        data: &Prepared,
        task: &MetaTask,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<EpisodeLoss> {
        let nodes = task.nodes();
        let h = gcn_forward_rows(
            tape,
            &data.adj,
            data.graph.features(),
            store,
            &self.gcn,
            &nodes,
            rng,
        )?;
        let loss_g = if self.gamma < 1.0 {
            Some(proto_loss(tape, h, task)?)
        } else {
            None
        };
        let loss_n = if self.uses_embedder() {
            let props = tape.constant(data.task_props(task));
            let tg = TaskGraph::new(task.support.len(), task.query.len(), self.mode)?;
            let (z, _) = embed_task(tape, store, &self.egnn, h, props, &tg)?;
            Some(proto_loss(tape, z, task)?)
        } else {
            None
        };
        let total = match (loss_n, loss_g) {
            (Some(n), Some(g)) => total_loss(tape, n, g, self.gamma)?,
            (Some(n), None) => n,
            (None, Some(g)) => g,
            (None, None) => unreachable!("gamma lies in [0, 1]"),
        };
        Ok(EpisodeLoss {
            total,
            loss_n,
            loss_g,
        })
    }

    /// Inference-mode GCN output for every node.
    pub fn embed_nodes(&self, data: &Prepared) -> Result<Tensor> {
        gcn_embed(&data.adj, data.graph.features(), &self.store, &self.gcn)
    }

    /// Query log-probabilities from the task's semantic rows `h_task`
    /// (supports first), which may have been transformed by the caller.
    pub fn query_log_probs(
        &self,
        h_task: &Tensor,
        props: &Tensor,
        task: &MetaTask,
    ) -> Result<Tensor> {
        if h_task.rows() != task.num_nodes() {
            return Err(TegError::DimensionMismatch(format!(
                "{} semantic rows for a {}-node task",
                h_task.rows(),
                task.num_nodes()
            )));
        }
        let mut tape = Tape::new();
        let h = tape.constant(h_task.clone());
        let coords = if self.uses_embedder() {
            let p = tape.constant(props.clone());
            let tg = TaskGraph::new(task.support.len(), task.query.len(), self.mode)?;
            embed_task(&mut tape, &self.store, &self.egnn, h, p, &tg)?.0
        } else {
            h
        };
        let lp = proto_log_probs(&mut tape, coords, task)?;
        Ok(tape.value(lp).clone())
    }
}

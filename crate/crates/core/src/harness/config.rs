use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::embedder::TaskGraphMode;
use crate::episodes::EpisodeConfig;
use crate::error::{Result, TegError};
use crate::graph::SbmConfig;
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SbmConfig),
    File(PathBuf),
}

/// Everything that determines a run. Serializes to a flat `key=value` text
/// whose SHA-256 is the config hash stamped on reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    /// Base / validation / novel class counts.
    pub split: (usize, usize, usize),
    pub episodes: EpisodeConfig,
    pub gcn_dim: usize,
    pub gcn_dropout: f64,
    pub gcn_layers: usize,
    pub anchors: usize,
    pub egnn_layers: usize,
    pub egnn_hidden: usize,
    pub message_dim: usize,
    pub task_graph: TaskGraphMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub class_fraction: f64,
    pub label_availability: f64,
    pub val_every: usize,
    pub val_episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SbmConfig::default()),
            split: (5, 5, 5),
            episodes: EpisodeConfig::new(5, 5),
            gcn_dim: 64,
            gcn_dropout: 0.5,
            gcn_layers: 1,
            anchors: 16,
            egnn_layers: 2,
            egnn_hidden: 64,
            message_dim: 64,
            task_graph: TaskGraphMode::Complete,
            lr: 0.001,
            weight_decay: 0.0005,
            seed: 0,
            class_fraction: 1.0,
            label_availability: 1.0,
            val_every: 25,
            val_episodes: 20,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| TegError::Parse {
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

/// Non-comment, non-blank `key=value` lines with their 1-based line numbers.
/// Repeated keys are rejected.
fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(TegError::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if out.iter().any(|(_, seen, _)| *seen == k) {
            return Err(TegError::Parse {
                line: i + 1,
                msg: format!("duplicate key {k}"),
            });
        }
        out.push((i + 1, k, v));
    }
    Ok(out)
}

fn set_sbm(cfg: &mut SbmConfig, line: usize, key: &str, v: &str) -> Result<bool> {
    match key {
        "num_classes" => cfg.num_classes = parse_value(line, key, v)?,
        "nodes_per_class" => cfg.nodes_per_class = parse_value(line, key, v)?,
        "p_in" => cfg.p_in = parse_value(line, key, v)?,
        "p_out" => cfg.p_out = parse_value(line, key, v)?,
        "feature_dim" => cfg.feature_dim = parse_value(line, key, v)?,
        "class_mean_scale" => cfg.class_mean_scale = parse_value(line, key, v)?,
        "feature_noise_sigma" => cfg.feature_noise_sigma = parse_value(line, key, v)?,
        "seed" => cfg.seed = parse_value(line, key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn sbm_lines(cfg: &SbmConfig, prefix: &str) -> String {
    format!(
        "{prefix}num_classes={}\n{prefix}nodes_per_class={}\n{prefix}p_in={}\n{prefix}p_out={}\n\
         {prefix}feature_dim={}\n{prefix}class_mean_scale={}\n{prefix}feature_noise_sigma={}\n{prefix}seed={}\n",
        cfg.num_classes,
        cfg.nodes_per_class,
        cfg.p_in,
        cfg.p_out,
        cfg.feature_dim,
        cfg.class_mean_scale,
        cfg.feature_noise_sigma,
        cfg.seed
    )
}

/// Generator settings from `key=value` text; keys may carry an `sbm.` prefix.
pub fn parse_sbm_config(text: &str) -> Result<SbmConfig> {
    let mut cfg = SbmConfig::default();
    for (line, k, v) in entries(text)? {
        let key = k.strip_prefix("sbm.").unwrap_or(&k);
        if !set_sbm(&mut cfg, line, key, &v)? {
            return Err(TegError::Parse {
                line,
                msg: format!("unknown key {k}"),
            });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn sbm_config_text(cfg: &SbmConfig) -> String {
    sbm_lines(cfg, "")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut sbm = SbmConfig::default();
        let mut data_path = None;
        let mut train_way = None;
        for (line, k, v) in entries(text)? {
            if let Some(rest) = k.strip_prefix("sbm.") {
                if set_sbm(&mut sbm, line, rest, &v)? {
                    continue;
                }
                return Err(TegError::Parse {
                    line,
                    msg: format!("unknown key {k}"),
                });
            }
            let e = &mut cfg.episodes;
            match k.as_str() {
                "data" => data_path = (v != "synthetic").then(|| PathBuf::from(&v)),
                "split" => {
                    let parts: Vec<usize> = v
                        .split(',')
                        .map(|p| parse_value(line, "split", p.trim()))
                        .collect::<Result<_>>()?;
                    let [b, va, n] = parts[..] else {
                        return Err(TegError::Parse {
                            line,
                            msg: "split needs three counts base,valid,novel".into(),
                        });
                    };
                    cfg.split = (b, va, n);
                }
                "n_way" => e.n_way = parse_value(line, &k, &v)?,
                "k_shot" => e.k_shot = parse_value(line, &k, &v)?,
                "m_query" => e.m_query = parse_value(line, &k, &v)?,
                "train_way" => train_way = Some(parse_value(line, &k, &v)?),
                "episodes_train" => e.episodes_train = parse_value(line, &k, &v)?,
                "episodes_eval" => e.episodes_eval = parse_value(line, &k, &v)?,
                "eval_seeds" => e.eval_seeds = parse_value(line, &k, &v)?,
                "gamma" => e.gamma = parse_value(line, &k, &v)?,
                "gcn.dim" => cfg.gcn_dim = parse_value(line, &k, &v)?,
                "gcn.dropout" => cfg.gcn_dropout = parse_value(line, &k, &v)?,
                "gcn.layers" => cfg.gcn_layers = parse_value(line, &k, &v)?,
                "anchors" => cfg.anchors = parse_value(line, &k, &v)?,
                "egnn.layers" => cfg.egnn_layers = parse_value(line, &k, &v)?,
                "egnn.hidden" => cfg.egnn_hidden = parse_value(line, &k, &v)?,
                "egnn.message_dim" => cfg.message_dim = parse_value(line, &k, &v)?,
                "task_graph" => cfg.task_graph = v.parse()?,
                "lr" => cfg.lr = parse_value(line, &k, &v)?,
                "weight_decay" => cfg.weight_decay = parse_value(line, &k, &v)?,
                "seed" => cfg.seed = parse_value(line, &k, &v)?,
                "class_fraction" => cfg.class_fraction = parse_value(line, &k, &v)?,
                "label_availability" => cfg.label_availability = parse_value(line, &k, &v)?,
                "val_every" => cfg.val_every = parse_value(line, &k, &v)?,
                "val_episodes" => cfg.val_episodes = parse_value(line, &k, &v)?,
                _ => {
                    return Err(TegError::Parse {
                        line,
                        msg: format!("unknown key {k}"),
                    })
                }
            }
        }
        // Training way follows the evaluation way unless set.
        cfg.episodes.train_way = train_way.unwrap_or(cfg.episodes.n_way);
        cfg.data = match data_path {
            Some(p) => DataSource::File(p),
            None => DataSource::Synthetic(sbm),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let e = &self.episodes;
        let mut s = String::new();
        match &self.data {
            DataSource::Synthetic(sbm) => {
                s.push_str("data=synthetic\n");
                s.push_str(&sbm_lines(sbm, "sbm."));
            }
            DataSource::File(p) => s.push_str(&format!("data={}\n", p.display())),
        }
        let (b, v, n) = self.split;
        s.push_str(&format!(
            "split={b},{v},{n}\nn_way={}\nk_shot={}\nm_query={}\ntrain_way={}\nepisodes_train={}\n\
             episodes_eval={}\neval_seeds={}\ngamma={}\n",
            e.n_way,
            e.k_shot,
            e.m_query,
            e.train_way,
            e.episodes_train,
            e.episodes_eval,
            e.eval_seeds,
            e.gamma
        ));
        s.push_str(&format!(
            "gcn.dim={}\ngcn.dropout={}\ngcn.layers={}\nanchors={}\negnn.layers={}\negnn.hidden={}\n\
             egnn.message_dim={}\ntask_graph={}\nlr={}\nweight_decay={}\nseed={}\nclass_fraction={}\n\
             label_availability={}\nval_every={}\nval_episodes={}\n",
            self.gcn_dim,
            self.gcn_dropout,
            self.gcn_layers,
            self.anchors,
            self.egnn_layers,
            self.egnn_hidden,
            self.message_dim,
            self.task_graph,
            self.lr,
            self.weight_decay,
            self.seed,
            self.class_fraction,
            self.label_availability,
            self.val_every,
            self.val_episodes
        ));
        s
    }

    /// Hex SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.episodes.validate()?;
        if let DataSource::Synthetic(sbm) = &self.data {
            sbm.validate()?;
        }
        if self.gcn_dim == 0
            || self.gcn_layers == 0
            || self.egnn_hidden == 0
            || self.message_dim == 0
        {
            return Err(TegError::InvalidConfig(
                "model widths and gcn.layers must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gcn_dropout) {
            return Err(TegError::InvalidConfig(format!(
                "gcn.dropout must lie in [0, 1), got {}",
                self.gcn_dropout
            )));
        }
        if !(self.lr > 0.0 && self.weight_decay >= 0.0) {
            return Err(TegError::InvalidConfig(
                "lr must be > 0 and weight_decay >= 0".into(),
            ));
        }
        for (name, v) in [
            ("class_fraction", self.class_fraction),
            ("label_availability", self.label_availability),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(TegError::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        if self.val_every == 0 {
            return Err(TegError::InvalidConfig("val_every must be >= 1".into()));
        }
        if self.split.0 == 0 {
            return Err(TegError::InvalidConfig(
                "split needs at least one base class".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Deterministic child seed for a named stream, so that changing one part of
/// a run (say the number of validation episodes) leaves the others alone.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

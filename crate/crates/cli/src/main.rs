use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use teg::graph::{generate_sbm, load_graph, save_graph, LabelPool};
use teg::harness::{
    derive_seed, diversity_grid, equivariance_audit, evaluate, grid_csv, make_transform,
    parse_sbm_config, run_episodes, run_experiment, sample_tasks, toy_grad_check, train, Prepared,
    RunConfig, TegModel,
};
use teg::numerics::checkpoint;
use teg::structural::{attach_anchors, build_structural_features, zero_ratio};

#[derive(Parser)]
#[command(
    name = "teg",
    version,
    about = "Task-equivariant few-shot node classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration, flat key=value text. Defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))
            }
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train one model and write its checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Per-episode training log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate on novel classes. With a checkpoint the given parameters are
    /// scored under each evaluation seed; without one every run is trained
    /// from scratch first.
    Eval {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Per-seed JSONL report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Per-episode JSONL dump (node ids, labels, predictions); needs a checkpoint.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Compare predictions on the same episodes before and after random
    /// rotations/reflections plus translations of the semantic embeddings.
    AuditEquivariance {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        transforms: usize,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 5.0)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one model per (class fraction, label availability) cell.
    DiversityGrid {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.6,1.0")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.6,1.0")]
        availabilities: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a stochastic block model graph in the text graph format.
    GenSynthetic {
        /// Generator settings, key=value (optionally prefixed with `sbm.`).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Anchor degrees and the zero ratio of the structural features.
    DiagAnchors {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dump of the structural feature matrix.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference check of the full loss on a toy model.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(cfg: &RunConfig, data: &Prepared, path: &Path) -> Result<TegModel> {
    let (store, _) = checkpoint::load(path)?;
    let mut model = TegModel::new(cfg, data.graph.feature_dim(), 0)?;
    let expected: Vec<&str> = model.store.names().collect();
    let found: Vec<&str> = store.names().collect();
    if expected != found {
        bail!(
            "checkpoint {} does not match the configured model",
            path.display()
        );
    }
    for p in store.iter() {
        model.store.set(&p.name, p.value.clone())?;
    }
    Ok(model)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out, log } => {
            let cfg = cfg.load()?;
            let data = Prepared::new(&cfg)?;
            let outcome = train(&cfg, &data, cfg.seed)?;
            checkpoint::save(&out, &outcome.model.store, Some(&outcome.adam))?;
            if let Some(log) = log {
                write(&log, &outcome.log.to_jsonl())?;
            }
            let last = outcome.log.records.last().map_or(f64::NAN, |r| r.loss);
            println!(
                "trained {} episodes, last loss {last:.4}, kept parameters from episode {}",
                outcome.log.records.len(),
                outcome.log.best_episode.unwrap_or(0)
            );
        }
        Command::Eval {
            cfg,
            checkpoint,
            out,
            csv,
            dump,
        } => {
            let cfg = cfg.load()?;
            let data = Prepared::new(&cfg)?;
            let report = match &checkpoint {
                Some(path) => {
                    let model = load_model(&cfg, &data, path)?;
                    let novel = LabelPool::full(&data.graph, &data.split.novel);
                    let shape = cfg.episodes.eval_shape();
                    let seeds: Vec<u64> = (0..cfg.episodes.eval_seeds as u64)
                        .map(|i| derive_seed(cfg.seed, "eval-seed", i))
                        .collect();
                    if let Some(dump) = &dump {
                        let h_all = model.embed_nodes(&data)?;
                        let mut text = String::new();
                        for &seed in &seeds {
                            let tasks = sample_tasks(
                                &novel,
                                shape,
                                cfg.episodes.episodes_eval,
                                seed,
                                "eval",
                            )?;
                            for r in run_episodes(&model, &data, &h_all, &tasks)? {
                                text.push_str(&r.to_json());
                                text.push('\n');
                            }
                        }
                        write(dump, &text)?;
                    }
                    evaluate(
                        &model,
                        &data,
                        &novel,
                        shape,
                        cfg.episodes.episodes_eval,
                        &seeds,
                        &cfg.hash(),
                    )?
                }
                None => {
                    if dump.is_some() {
                        bail!("--dump needs --checkpoint");
                    }
                    run_experiment(&cfg, &data)?.report
                }
            };
            if let Some(out) = out {
                write(&out, &report.to_jsonl())?;
            }
            if let Some(csv) = csv {
                write(&csv, &report.summary_csv())?;
            }
            println!(
                "accuracy {:.4} ± {:.4} over {} runs of {} episodes",
                report.mean,
                report.std,
                report.accuracies.len(),
                report.episodes
            );
        }
        Command::AuditEquivariance {
            cfg,
            checkpoint,
            transforms,
            episodes,
            noise,
            lambda,
            out,
        } => {
            let cfg = cfg.load()?;
            let data = Prepared::new(&cfg)?;
            let model = load_model(&cfg, &data, &checkpoint)?;
            let base = LabelPool::full(&data.graph, &data.split.base);
            let tasks = sample_tasks(
                &base,
                cfg.episodes.train_shape(),
                episodes,
                cfg.seed,
                "audit",
            )?;
            let specs = (0..transforms as u64)
                .map(|i| {
                    make_transform(
                        cfg.gcn_dim,
                        (-lambda, lambda),
                        noise,
                        derive_seed(cfg.seed, "transform", i),
                    )
                })
                .collect::<teg::Result<Vec<_>>>()?;
            let report = equivariance_audit(&model, &data, &tasks, &specs)?;
            if let Some(out) = out {
                write(&out, &(serde_json::to_string(&report)? + "\n"))?;
            }
            println!(
                "reference accuracy {:.4}, transformed {:.4}, gap {:+.4}, agreement {:.4} over {} queries",
                report.reference_accuracy,
                report.mean_transformed_accuracy,
                report.gap,
                report.agreement,
                report.queries
            );
        }
        Command::DiversityGrid {
            cfg,
            fractions,
            availabilities,
            out,
        } => {
            let cfg = cfg.load()?;
            let data = Prepared::new(&cfg)?;
            let cells = diversity_grid(&cfg, &data, &fractions, &availabilities)?;
            let table = grid_csv(&cells);
            write(&out, &table)?;
            print!("{table}");
        }
        Command::GenSynthetic { config, out } => {
            let sbm = match config {
                Some(p) => parse_sbm_config(
                    &fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => Default::default(),
            };
            let g = generate_sbm(&sbm)?;
            save_graph(&g, &out)?;
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                g.num_nodes(),
                g.num_edges(),
                g.num_classes(),
                out.display()
            );
        }
        Command::DiagAnchors {
            graph,
            k,
            seed,
            csv,
        } => {
            let g = load_graph(&graph)?;
            let anchors = attach_anchors(&g, k, seed);
            let feats = build_structural_features(&g, &anchors);
            println!("k={k}");
            for (i, d) in anchors.degrees().iter().enumerate() {
                println!("anchor {} degree {d}", i + 1);
            }
            match zero_ratio(&feats) {
                Ok(z) => println!("zero ratio {z:.6}"),
                Err(e) => println!("zero ratio undefined: {e}"),
            }
            if let Some(csv) = csv {
                write(&csv, &feats.to_csv())?;
            }
        }
        Command::GradCheck { seed, step } => {
            let r = toy_grad_check(seed, step)?;
            println!(
                "checked {} coordinates, max relative error {:.3e}",
                r.checked, r.max_rel_error
            );
            if let Some((name, idx, analytic, numeric)) = &r.worst {
                println!("worst: {name}[{idx}] analytic {analytic:.6e} numeric {numeric:.6e}");
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hypergrl::checks::gradcheck_suite;
use hypergrl::config::{self, Config};
use hypergrl::eval::{
    aggregate, kmeans, link_predict, linear_probe, nmi_with, read_reports, split_edges, split_nodes, summary_table,
    write_report, MetricsReport,
};
use hypergrl::graph::{generate_sbm, save_graph, SbmSpec};
use hypergrl::io::{load_checkpoint, load_tensor, save_checkpoint, save_tensor, write_edge_split, write_history, write_node_split};
use hypergrl::parallel::{threads_from_env, with_threads};
use hypergrl::pipeline::{load_dataset, run_pipeline};
use hypergrl::trainer::{embed, train, TrainConfig};

use manifest::{now_ms, CommandRecord, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "hypergrl", version, about = "Self-supervised graph embeddings on the unit hypersphere")]
struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for this command; `run` uses it in place of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: the config's `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config entry, e.g. `train.epochs=200`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a stochastic block model dataset (edges.txt, features.txt, labels.txt).
    Sbm {
        #[arg(long, value_delimiter = ',', default_value = "100,100,100")]
        blocks: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        p_in: f64,
        #[arg(long, default_value_t = 0.01)]
        p_out: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
    /// Train an encoder; writes checkpoint.hgc and history.jsonl.
    Train,
    /// Embed the dataset with a trained checkpoint; writes embeddings.hgb.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Linear probe on frozen embeddings; writes probe.json.
    Probe {
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// k-means on frozen embeddings scored by NMI; writes cluster.json.
    Cluster {
        #[arg(long)]
        embeddings: PathBuf,
        /// Number of clusters (default: number of label classes).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Split edges, train on the training edges, and score held-out links; writes linkpred.json.
    Linkpred,
    /// Finite-difference check of every differentiable primitive and the full loss.
    Gradcheck,
    /// Aggregate metrics files across seeds; writes report.json.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train, embed, probe, cluster and link-predict for every seed; writes metrics.json.
    Run,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sbm { .. } => "sbm",
            Command::Train => "train",
            Command::Embed { .. } => "embed",
            Command::Probe { .. } => "probe",
            Command::Cluster { .. } => "cluster",
            Command::Linkpred => "linkpred",
            Command::Gradcheck => "gradcheck",
            Command::Report { .. } => "report",
            Command::Run => "run",
        }
    }
}

struct Ctx {
    config: Config,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.config.train.clone()
        }
    }
}

fn load(cli: &Cli) -> Result<Ctx> {
    let mut config = match &cli.config {
        Some(p) => config::load_config(p, &cli.overrides).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let c = config::parse_config("", &cli.overrides)?;
            c.validate()?;
            c
        }
    };
    if let Some(s) = cli.seed {
        config.seeds = vec![s];
    }
    let seed = config.seeds[0];
    let out = cli.out.clone().unwrap_or_else(|| config.out_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(Ctx { config, seed, out })
}

fn single_report(ctx: &Ctx, task: &str, metric: &str, value: f64, file: &str) -> Result<PathBuf> {
    let r = MetricsReport::new(task, metric, vec![ctx.seed], vec![value], &ctx.config.fingerprint()?)?;
    let path = ctx.out(file);
    print!("{}", write_report(&[r], &path)?);
    Ok(path)
}

fn labels_of(g: &hypergrl::graph::GraphDataset) -> Result<&[usize]> {
    g.labels().context("the dataset has no labels; set dataset.labels")
}

fn check_rows(z_rows: usize, n: usize, path: &Path) -> Result<()> {
    if z_rows != n {
        bail!("{} has {z_rows} rows but the dataset has {n} nodes", path.display());
    }
    Ok(())
}

fn execute(cmd: &Command, ctx: &Ctx) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::Sbm { blocks, p_in, p_out, noise } => {
            let g = generate_sbm(&SbmSpec {
                block_sizes: blocks.clone(),
                p_in: *p_in,
                p_out: *p_out,
                feature_noise: *noise,
                seed: ctx.seed,
            })?;
            let paths = [ctx.out("edges.txt"), ctx.out("features.txt"), ctx.out("labels.txt")];
            save_graph(&g, &paths[0], &paths[1], Some(&paths[2]))?;
            println!("{} nodes, {} edges, {} features", g.num_nodes(), g.num_edges(), g.num_features());
            Ok(paths.to_vec())
        }
        Command::Train => {
            let g = load_dataset(&ctx.config.dataset)?;
            let r = train(&g, &ctx.train_config())?;
            let (ck, hist) = (ctx.out("checkpoint.hgc"), ctx.out("history.jsonl"));
            save_checkpoint(&ck, &r.checkpoint)?;
            write_history(&hist, &r.history)?;
            let last = r.history.last().expect("at least one epoch");
            println!(
                "{} epochs{}; best epoch {} loss {:.6}; final C {:.4} alpha {:.4}",
                r.history.len(),
                if r.stopped_early { " (early stop)" } else { "" },
                r.checkpoint.epoch,
                r.checkpoint.loss,
                last.collapse,
                last.alpha
            );
            Ok(vec![ck, hist])
        }
        Command::Embed { checkpoint } => {
            let g = load_dataset(&ctx.config.dataset)?;
            let ck = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let z = embed(&g, &ck, ctx.config.train.eps_norm)?;
            let path = ctx.out("embeddings.hgb");
            save_tensor(&path, &z)?;
            println!("{} x {} embeddings", z.rows(), z.cols());
            Ok(vec![path])
        }
        Command::Probe { embeddings } => {
            let g = load_dataset(&ctx.config.dataset)?;
            let labels = labels_of(&g)?;
            let z = load_tensor(embeddings).with_context(|| format!("loading {}", embeddings.display()))?;
            check_rows(z.rows(), g.num_nodes(), embeddings)?;
            let split = split_nodes(labels, ctx.config.eval.node_split, ctx.seed)?;
            let split_path = ctx.out("node_split.txt");
            write_node_split(&split_path, &split)?;
            let r = linear_probe(&z, labels, &split, &ctx.config.eval.probe)?;
            log::info!("probe: val {:.4}, train {:.4}, l2 {}", r.val_accuracy, r.train_accuracy, r.l2);
            Ok(vec![split_path, single_report(ctx, "probe", "accuracy", r.test_accuracy, "probe.json")?])
        }
        Command::Cluster { embeddings, k } => {
            let g = load_dataset(&ctx.config.dataset)?;
            let labels = labels_of(&g)?;
            let z = load_tensor(embeddings).with_context(|| format!("loading {}", embeddings.display()))?;
            check_rows(z.rows(), g.num_nodes(), embeddings)?;
            let k = k.or(g.num_classes()).context("cannot infer the cluster count; pass --k")?;
            let r = kmeans(&z, k, &ctx.config.eval.kmeans, ctx.seed)?;
            let score = nmi_with(&r.assignments, labels, ctx.config.eval.nmi_norm)?;
            log::info!("k-means: inertia {:.6} after {} iterations", r.inertia, r.iterations);
            Ok(vec![single_report(ctx, "cluster", "nmi", score, "cluster.json")?])
        }
        Command::Linkpred => {
            let g = load_dataset(&ctx.config.dataset)?;
            let split = split_edges(&g, ctx.config.eval.edge_split, ctx.seed)?;
            let split_path = ctx.out("edge_split.txt");
            write_edge_split(&split_path, &split)?;
            let message = g.with_adjacency(split.message_graph.clone())?;
            let r = train(&message, &ctx.train_config())?;
            let z = embed(&message, &r.checkpoint, ctx.config.train.eps_norm)?;
            let lp = link_predict(&z, &split, &ctx.config.eval.linkpred, ctx.seed)?;
            log::info!("link decoder: val AUC {:.4} at epoch {}", lp.val_auc, lp.best_epoch);
            Ok(vec![split_path, single_report(ctx, "linkpred", "auc", lp.test_auc, "linkpred.json")?])
        }
        Command::Gradcheck => {
            let reports = gradcheck_suite(ctx.seed)?;
            for r in &reports {
                println!(
                    "{:<16} {:>10.3e} tol {:<8.0e} {:>6} entries  {}",
                    r.name,
                    r.max_rel_err,
                    r.tolerance,
                    r.checked,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            let path = ctx.out("gradcheck.json");
            fs::write(&path, serde_json::to_string_pretty(&reports)? + "\n")?;
            let failed = reports.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                bail!("{failed} of {} gradient checks failed", reports.len());
            }
            Ok(vec![path])
        }
        Command::Report { inputs } => {
            let mut all = Vec::new();
            for p in inputs {
                all.extend(read_reports(p).with_context(|| format!("reading {}", p.display()))?);
            }
            let merged = aggregate(&all)?;
            let path = ctx.out("report.json");
            write_report(&merged, &path)?;
            print!("{}", summary_table(&merged));
            Ok(vec![path])
        }
        Command::Run => {
            let reports = run_pipeline(&ctx.config)?;
            let path = ctx.out("metrics.json");
            print!("{}", write_report(&reports, &path)?);
            Ok(vec![path])
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let ctx = load(&cli)?;
    let started = now_ms();
    let outputs = with_threads(threads_from_env(), || execute(&cli.command, &ctx))?;

    let mut manifest = RunManifest::open(&ctx.out, &ctx.config.fingerprint()?)?;
    manifest.commands.push(CommandRecord {
        command: cli.command.name().to_string(),
        seed: Some(ctx.seed),
        outputs,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    });
    manifest.save(&ctx.out)
}

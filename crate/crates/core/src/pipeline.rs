//! End-to-end runs: train, embed, and evaluate on every task.

use serde::{Deserialize, Serialize};

use crate::config::{Config, DatasetConfig};
use crate::eval::{
    kmeans, link_predict, linear_probe, nmi_with, split_edges, split_nodes, LinkPredResult, MetricsReport,
    ProbeResult,
};
use crate::graph::{generate_sbm, load_graph, GraphDataset};
use crate::trainer::{embed, train, TrainConfig};
use crate::{Error, Result};

pub fn load_dataset(d: &DatasetConfig) -> Result<GraphDataset> {
    match (&d.sbm, &d.edges, &d.features) {
        (Some(spec), None, None) => generate_sbm(spec),
        (None, Some(e), Some(f)) => Ok(load_graph(e, f, d.labels.as_deref())?.0),
        _ => Err(Error::Config(
            "dataset needs either an sbm spec or edges and features paths".into(),
        )),
    }
}

fn labels_of(g: &GraphDataset) -> Result<&[usize]> {
    g.labels()
        .ok_or_else(|| Error::Argument("this task needs node labels".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub probe: ProbeResult,
    pub nmi: f64,
}

/// Train on the full graph, then probe and cluster the embeddings.
pub fn node_tasks(g: &GraphDataset, cfg: &Config, seed: u64) -> Result<NodeMetrics> {
    let labels = labels_of(g)?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let result = train(g, &train_cfg)?;
    let z = embed(g, &result.checkpoint, train_cfg.eps_norm)?;
    let split = split_nodes(labels, cfg.eval.node_split, seed)?;
    let probe = linear_probe(&z, labels, &split, &cfg.eval.probe)?;
    let classes = g.num_classes().unwrap_or(1).max(2).min(g.num_nodes());
    let clusters = kmeans(&z, classes, &cfg.eval.kmeans, seed)?;
    let nmi = nmi_with(&clusters.assignments, labels, cfg.eval.nmi_norm)?;
    Ok(NodeMetrics { probe, nmi })
}

/// Split edges, train on the training-edge graph, and evaluate the decoder.
pub fn link_task(g: &GraphDataset, cfg: &Config, seed: u64) -> Result<LinkPredResult> {
    let split = split_edges(g, cfg.eval.edge_split, seed)?;
    let message = g.with_adjacency(split.message_graph.clone())?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let result = train(&message, &train_cfg)?;
    let z = embed(&message, &result.checkpoint, train_cfg.eps_norm)?;
    link_predict(&z, &split, &cfg.eval.linkpred, seed)
}

/// Every task over every configured seed, as one report per metric.
pub fn run_pipeline(cfg: &Config) -> Result<Vec<MetricsReport>> {
    let g = load_dataset(&cfg.dataset)?;
    let fp = cfg.fingerprint()?;
    let mut acc = Vec::new();
    let mut nmis = Vec::new();
    let mut aucs = Vec::new();
    for &seed in &cfg.seeds {
        let node = node_tasks(&g, cfg, seed)?;
        acc.push(node.probe.test_accuracy);
        nmis.push(node.nmi);
        aucs.push(link_task(&g, cfg, seed)?.test_auc);
    }
    Ok(vec![
        MetricsReport::new("probe", "accuracy", cfg.seeds.clone(), acc, &fp)?,
        MetricsReport::new("cluster", "nmi", cfg.seeds.clone(), nmis, &fp)?,
        MetricsReport::new("linkpred", "auc", cfg.seeds.clone(), aucs, &fp)?,
    ])
}

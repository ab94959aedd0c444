//! Full-batch self-supervised training.
//!
//! Each epoch draws a fresh augmented view, takes one Adam step on the
//! combined objective, then lets the balancing controller update the
//! uniformity weight from that epoch's collapse metric. The weight used in
//! epoch `t` is the one produced at the end of epoch `t - 1`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::fingerprint;
use crate::diff::{AdamConfig, AdamState, Tape, Tensor};
use crate::egab::{EgabConfig, EgabState};
use crate::encoder::{encode_view, init_params, Activation, Backbone, EncoderParams, EncoderSpec};
use crate::graph::{augment, DegreeVector, GraphDataset, GraphView};
use crate::objective::{entropy_proxy, total_loss, Objective, ObjectiveConfig};
use crate::rng::{derive_seed, Stream};
use crate::{Error, Result};

/// Which adjacency a graph-derived quantity is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    #[default]
    Original,
    View,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub k: usize,
    pub tau: f64,
    pub p_e: f64,
    pub p_x: f64,
    /// Embedding dimension.
    pub dim: usize,
    /// Hidden width; defaults to `dim`.
    pub hidden: Option<usize>,
    pub num_layers: usize,
    pub backbone: Backbone,
    pub activation: Activation,
    pub bias: bool,
    pub egab: EgabConfig,
    pub seed: u64,
    /// Epochs without a new minimum before stopping.
    pub patience: usize,
    pub degree_source: GraphSource,
    pub mean_graph: GraphSource,
    pub detach_target: bool,
    pub self_in_mean: bool,
    pub use_alignment: bool,
    pub eps_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1500,
            lr: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            k: 1,
            tau: 5.0,
            p_e: 0.8,
            p_x: 0.1,
            dim: 1024,
            hidden: None,
            num_layers: 2,
            backbone: Backbone::Gcn,
            activation: Activation::Silu,
            bias: true,
            egab: EgabConfig::default(),
            seed: 0,
            patience: 200,
            degree_source: GraphSource::Original,
            mean_graph: GraphSource::Original,
            detach_target: false,
            self_in_mean: false,
            use_alignment: true,
            eps_norm: 1e-12,
        }
    }
}

fn check_range(name: &str, v: f64, ok: bool, bounds: &str) -> Result<()> {
    if ok && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} is out of range; expected {bounds}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("epochs", self.epochs as f64, self.epochs >= 1, ">= 1")?;
        check_range("lr", self.lr, self.lr > 0.0, "> 0")?;
        check_range("weight_decay", self.weight_decay, self.weight_decay >= 0.0, ">= 0")?;
        check_range("beta1", self.beta1, (0.0..1.0).contains(&self.beta1), "[0, 1)")?;
        check_range("beta2", self.beta2, (0.0..1.0).contains(&self.beta2), "[0, 1)")?;
        check_range("eps_adam", self.eps_adam, self.eps_adam > 0.0, "> 0")?;
        check_range("k", self.k as f64, self.k >= 1, ">= 1")?;
        check_range("tau", self.tau, self.tau >= 0.0, ">= 0")?;
        check_range("p_e", self.p_e, (0.0..1.0).contains(&self.p_e), "[0, 1)")?;
        check_range("p_x", self.p_x, (0.0..1.0).contains(&self.p_x), "[0, 1)")?;
        check_range("dim", self.dim as f64, self.dim >= 1, ">= 1")?;
        if let Some(h) = self.hidden {
            check_range("hidden", h as f64, h >= 1, ">= 1")?;
        }
        check_range("num_layers", self.num_layers as f64, self.num_layers >= 1, ">= 1")?;
        check_range("patience", self.patience as f64, self.patience >= 1, ">= 1")?;
        check_range("eps_norm", self.eps_norm, self.eps_norm > 0.0, "> 0")?;
        self.egab.validate()
    }

    pub fn encoder_spec(&self, in_dim: usize) -> EncoderSpec {
        EncoderSpec {
            backbone: self.backbone,
            in_dim,
            hidden: vec![self.hidden.unwrap_or(self.dim); self.num_layers - 1],
            out_dim: self.dim,
            activation: self.activation,
            bias: self.bias,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
            weight_decay: self.weight_decay,
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            k: self.k,
            tau: self.tau,
            detach_target: self.detach_target,
            self_in_mean: self.self_in_mean,
            use_alignment: self.use_alignment,
            eps_norm: self.eps_norm,
        }
    }
}

/// One line of the training-history file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub align: f64,
    pub unif: f64,
    #[serde(rename = "C")]
    pub collapse: f64,
    #[serde(rename = "H_proxy")]
    pub h_proxy: f64,
    /// Weight used in this epoch's loss.
    pub alpha: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Elapsed milliseconds at the end of each epoch; not persisted.
    pub wall_clock_ms: Vec<f64>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Encoder snapshot together with the loss it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams<f32>,
    pub epoch: usize,
    pub loss: f64,
    pub fingerprint: String,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    /// Minimum-loss snapshot.
    pub checkpoint: Checkpoint,
    /// Snapshot at the last recorded epoch.
    pub last: Checkpoint,
    pub history: TrainHistory,
    pub stopped_early: bool,
}

/// Checkpoint at the earliest epoch attaining the minimum total loss.
pub fn early_stop_select(history: &TrainHistory, checkpoints: &[Checkpoint]) -> Result<Checkpoint> {
    let best = history
        .records
        .iter()
        .fold(None::<&EpochRecord>, |best, r| match best {
            Some(b) if b.total <= r.total => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Argument("early_stop_select: empty history".into()))?;
    checkpoints
        .iter()
        .find(|c| c.epoch == best.epoch)
        .cloned()
        .ok_or_else(|| Error::Argument(format!("no checkpoint kept for epoch {}", best.epoch)))
}

fn diagnostic_dump(epoch: usize, record: &EpochRecord, params: &EncoderParams<f32>) -> String {
    let norms: Vec<String> = params
        .tensors()
        .iter()
        .map(|t| format!("{:.4e}", t.data().iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt()))
        .collect();
    format!(
        "epoch {epoch}: total={} align={} unif={} C={} alpha={}; parameter norms [{}]",
        record.total,
        record.align,
        record.unif,
        record.collapse,
        record.alpha,
        norms.join(", ")
    )
}

/// Train an encoder on `g`.
pub fn train(g: &GraphDataset, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if g.num_nodes() == 0 {
        return Err(Error::Argument("cannot train on an empty graph".into()));
    }
    let fp = fingerprint(cfg)?;
    let spec = cfg.encoder_spec(g.num_features());
    let mut params = init_params::<f32>(&spec, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam(), &params.clone().into_tensors())?;
    let mut egab = EgabState::new(&cfg.egab, cfg.dim)?;

    let original_degrees = DegreeVector::of(g.adjacency());
    let static_objective = match (cfg.mean_graph, cfg.degree_source) {
        (GraphSource::Original, GraphSource::Original) => Some(Objective::<f32>::new(
            g.adjacency(),
            &original_degrees,
            cfg.objective(),
        )?),
        _ => None,
    };

    let start = Instant::now();
    let mut history = TrainHistory::default();
    let mut best: Option<Checkpoint> = None;
    let mut last: Option<Checkpoint> = None;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let view = augment(g, cfg.p_e, cfg.p_x, derive_seed(cfg.seed, Stream::Augment, epoch as u64))?;
        let per_view;
        let objective = match &static_objective {
            Some(o) => o,
            None => {
                per_view = view_objective(g, &view, cfg, &original_degrees)?;
                &per_view
            }
        };

        let alpha = egab.alpha;
        let mut tape = Tape::new();
        let eval = total_loss(&mut tape, &view, &params, objective, alpha)?;
        let b = eval.breakdown;
        let record = EpochRecord {
            epoch,
            total: b.total,
            align: b.align,
            unif: b.unif,
            collapse: b.collapse,
            h_proxy: entropy_proxy(b.collapse, egab.eps),
            alpha,
        };
        if !record.total.is_finite() || !record.collapse.is_finite() {
            return Err(Error::NonFinite(diagnostic_dump(epoch, &record, &params)));
        }
        history.records.push(record);
        history.wall_clock_ms.push(start.elapsed().as_secs_f64() * 1e3);

        let snapshot = || Checkpoint {
            params: params.clone(),
            epoch,
            loss: record.total,
            fingerprint: fp.clone(),
            seed: cfg.seed,
        };
        if best.as_ref().is_none_or(|c| record.total < c.loss) {
            best = Some(snapshot());
        }
        let stop = best.as_ref().is_some_and(|c| epoch - c.epoch >= cfg.patience);
        if epoch + 1 == cfg.epochs || stop {
            last = Some(snapshot());
        }

        let grads = tape.backward(eval.loss)?;
        let grads = params.collect_grads(&grads, &eval.vars);
        for g in &grads {
            g.ensure_finite(&format!("gradient at epoch {epoch}"))
                .map_err(|e| Error::NonFinite(format!("{e}; {}", diagnostic_dump(epoch, &record, &params))))?;
        }
        adam.step_refs(params.tensors_mut(), &grads)?;
        egab.epoch_update(record.collapse)?;

        if stop {
            log::info!("early stop at epoch {epoch}: no improvement for {} epochs", cfg.patience);
            stopped_early = true;
            break;
        }
    }

    Ok(TrainResult {
        checkpoint: best.expect("at least one epoch ran"),
        last: last.expect("last epoch is always snapshotted"),
        history,
        stopped_early,
    })
}

fn view_objective(
    g: &GraphDataset,
    view: &GraphView<'_>,
    cfg: &TrainConfig,
    original_degrees: &DegreeVector,
) -> Result<Objective<f32>> {
    let mean_graph = match cfg.mean_graph {
        GraphSource::Original => g.adjacency(),
        GraphSource::View => &view.kept_edges,
    };
    let view_degrees;
    let degrees = match cfg.degree_source {
        GraphSource::Original => original_degrees,
        GraphSource::View => {
            view_degrees = DegreeVector::of(&view.kept_edges);
            &view_degrees
        }
    };
    Objective::new(mean_graph, degrees, cfg.objective())
}

/// Embeddings of the unaugmented graph under a checkpoint.
pub fn embed(g: &GraphDataset, ckpt: &Checkpoint, eps_norm: f64) -> Result<Tensor<f32>> {
    if ckpt.params.spec.in_dim != g.num_features() {
        return Err(Error::Incompatible(format!(
            "checkpoint expects {} features, dataset has {}",
            ckpt.params.spec.in_dim,
            g.num_features()
        )));
    }
    encode_view(&GraphView::identity(g), &ckpt.params, eps_norm)
}

/// Recompute the weight trajectory from recorded entropy proxies.
///
/// Entry `t` of the result is the weight that epoch `t` should have used.
pub fn replay_alpha(history: &TrainHistory, egab: &EgabConfig, dim: usize) -> Result<Vec<f64>> {
    let mut state = EgabState::new(egab, dim)?;
    let mut out = Vec::with_capacity(history.len());
    for rec in &history.records {
        out.push(state.alpha);
        if state.enabled {
            let hat = state.target_alpha(rec.h_proxy)?;
            state.ema_update(hat);
        }
    }
    Ok(out)
}

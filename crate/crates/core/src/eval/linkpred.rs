use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::auc;
use super::split::EdgeSplit;
use crate::diff::{kernels, AdamConfig, AdamState, Scalar, Tape, Tensor, Var};
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkPredConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without a better validation AUC before stopping.
    pub patience: usize,
}

impl Default for LinkPredConfig {
    fn default() -> Self {
        LinkPredConfig {
            hidden: 256,
            epochs: 300,
            lr: 5e-3,
            weight_decay: 0.0,
            patience: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPredResult {
    pub test_auc: f64,
    pub val_auc: f64,
    pub best_epoch: usize,
}

/// Two-layer decoder on `[z_u || z_v]`. The first layer is stored as the two
/// halves acting on `z_u` and `z_v`, so `Z W` is computed once per pass
/// instead of once per edge.
#[derive(Clone, Debug)]
pub struct Decoder {
    pub w_u: Tensor<f32>,
    pub w_v: Tensor<f32>,
    pub b1: Tensor<f32>,
    pub w2: Tensor<f32>,
    pub b2: Tensor<f32>,
}

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<f32> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound) as f32)
}

impl Decoder {
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::LinkDecoder, 0);
        Decoder {
            w_u: glorot(dim, hidden, 2 * dim, hidden, &mut rng),
            w_v: glorot(dim, hidden, 2 * dim, hidden, &mut rng),
            b1: Tensor::zeros(1, hidden),
            w2: glorot(hidden, 1, hidden, 1, &mut rng),
            b2: Tensor::zeros(1, 1),
        }
    }

    fn tensors(&self) -> [&Tensor<f32>; 5] {
        [&self.w_u, &self.w_v, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        vec![&mut self.w_u, &mut self.w_v, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Logits for `pairs` without building a tape.
    pub fn score(&self, z: &Tensor<f32>, pairs: &[(usize, usize)]) -> Vec<f64> {
        let pu = kernels::matmul(z, &self.w_u);
        let pv = kernels::matmul(z, &self.w_v);
        pairs
            .iter()
            .map(|&(u, v)| {
                pu.row(u)
                    .iter()
                    .zip(pv.row(v))
                    .zip(self.b1.row(0))
                    .zip(self.w2.data())
                    .fold(self.b2.data()[0], |acc, (((a, b), c), w)| {
                        let h = a + b + c;
                        acc + h / (1.0 + (-h).exp()) * w
                    }) as f64
            })
            .collect()
    }
}

fn forward(tape: &mut Tape<f32>, z: Var, vars: &[Var; 5], us: Arc<Vec<usize>>, vs: Arc<Vec<usize>>) -> Result<Var> {
    let [w_u, w_v, b1, w2, b2] = *vars;
    let pu = tape.matmul(z, w_u)?;
    let pv = tape.matmul(z, w_v)?;
    let hu = tape.gather_rows(pu, us)?;
    let hv = tape.gather_rows(pv, vs)?;
    let h = tape.add(hu, hv)?;
    let h = tape.add_bias(h, b1)?;
    let h = tape.silu(h);
    let logit = tape.matmul(h, w2)?;
    tape.add_bias(logit, b2)
}

fn pair_auc(decoder: &Decoder, z: &Tensor<f32>, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<f64> {
    let mut scores = decoder.score(z, pos);
    scores.extend(decoder.score(z, neg));
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < pos.len()).collect();
    auc(&scores, &labels)
}

/// Train the decoder on the training edges with BCE and Adam, keep the
/// parameters with the best validation AUC, and report test AUC.
pub fn link_predict<T: Scalar>(z: &Tensor<T>, split: &EdgeSplit, config: &LinkPredConfig, seed: u64) -> Result<LinkPredResult> {
    for (name, part) in ["train", "val", "test", "train_neg", "val_neg", "test_neg"]
        .iter()
        .zip(split.partitions())
    {
        if part.is_empty() {
            return Err(Error::Argument(format!("link prediction: {name} partition is empty")));
        }
        if let Some(&(u, v)) = part.iter().find(|&&(u, v)| u >= z.rows() || v >= z.rows()) {
            return Err(Error::Shape(format!("edge ({u}, {v}) out of range for {} embeddings", z.rows())));
        }
    }
    if config.hidden == 0 || config.epochs == 0 {
        return Err(Error::Config("linkpred hidden and epochs must be >= 1".into()));
    }
    let z = z.cast::<f32>();
    let pairs: Vec<(usize, usize)> = split.train.iter().chain(&split.train_neg).copied().collect();
    let us = Arc::new(pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let vs = Arc::new(pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let targets = Arc::new(
        (0..pairs.len())
            .map(|i| if i < split.train.len() { 1.0f32 } else { 0.0 })
            .collect::<Vec<_>>(),
    );

    let mut decoder = Decoder::init(z.cols(), config.hidden, seed);
    let adam_cfg = AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    };
    let owned: Vec<Tensor<f32>> = decoder.tensors().into_iter().cloned().collect();
    let mut adam = AdamState::new(adam_cfg, &owned)?;
    let mut best = (pair_auc(&decoder, &z, &split.val, &split.val_neg)?, 0usize, decoder.clone());
    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone())?;
        let t = decoder.tensors();
        let vars = [
            tape.param(t[0].clone())?,
            tape.param(t[1].clone())?,
            tape.param(t[2].clone())?,
            tape.param(t[3].clone())?,
            tape.param(t[4].clone())?,
        ];
        let logits = forward(&mut tape, zv, &vars, us.clone(), vs.clone())?;
        let loss = tape.bce_with_logits(logits, targets.clone())?;
        if !tape.scalar(loss).is_finite() {
            return Err(Error::NonFinite(format!("link decoder loss at epoch {epoch}")));
        }
        let grads = tape.backward(loss)?;
        let g: Vec<Tensor<f32>> = vars
            .iter()
            .zip(decoder.tensors())
            .map(|(&v, like)| grads.get_or_zeros(v, like))
            .collect();
        adam.step_refs(decoder.tensors_mut(), &g)?;

        let val = pair_auc(&decoder, &z, &split.val, &split.val_neg)?;
        if val > best.0 {
            best = (val, epoch, decoder.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    let (val_auc, best_epoch, decoder) = best;
    Ok(LinkPredResult {
        test_auc: pair_auc(&decoder, &z, &split.test, &split.test_neg)?,
        val_auc,
        best_epoch,
    })
}

use serde::{Deserialize, Serialize};

use super::metrics::accuracy;
use super::split::NodeSplit;
use crate::diff::{kernels, Scalar, Tensor};
use crate::{Error, Result};

/// l2 penalties tried by [`linear_probe`]: 1e-4, 1e-3, ..., 1e2.
pub const L2_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub l2_grid: Vec<f64>,
    /// Accelerated gradient iterations per fit.
    pub iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2_grid: L2_GRID.to_vec(),
            iterations: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub train_accuracy: f64,
    pub l2: f64,
}

/// Multinomial logistic regression; the last row of `weights` is the bias.
#[derive(Clone, Debug)]
pub struct LogisticModel {
    pub weights: Tensor<f64>,
}

impl LogisticModel {
    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, x: &Tensor<f64>) -> Tensor<f64> {
        kernels::matmul(&with_bias_column(x), &self.weights)
    }

    pub fn predict(&self, x: &Tensor<f64>) -> Vec<usize> {
        let logits = self.logits(x);
        (0..logits.rows())
            .map(|i| argmax(logits.row(i)))
            .collect()
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn with_bias_column(x: &Tensor<f64>) -> Tensor<f64> {
    let f = x.cols();
    Tensor::from_fn(x.rows(), f + 1, |i, j| if j < f { x.get(i, j) } else { 1.0 })
}

/// Softmax probabilities minus one-hot targets, divided by n.
fn residual(logits: &Tensor<f64>, y: &[usize]) -> Tensor<f64> {
    let n = logits.rows() as f64;
    let mut out = logits.clone();
    for (i, &yi) in y.iter().enumerate() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v / s - if c == yi { 1.0 } else { 0.0 }) / n;
        }
    }
    out
}

/// Fit `(1/n) sum CE + (l2/2) ||W||^2` (bias unpenalized) by Nesterov-accelerated
/// gradient descent from zero, with step `1 / L` for the smoothness bound `L`.
pub fn fit_logistic(x: &Tensor<f64>, y: &[usize], num_classes: usize, l2: f64, iterations: usize) -> Result<LogisticModel> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("probe: {} rows for {} labels", x.rows(), y.len())));
    }
    if x.rows() == 0 {
        return Err(Error::Argument("probe: empty training set".into()));
    }
    if !(l2 >= 0.0) {
        return Err(Error::Argument(format!("probe: l2 = {l2} must be >= 0")));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::Argument(format!("probe: label {bad} out of range for {num_classes} classes")));
    }
    let xb = with_bias_column(x);
    let xt = xb.transpose();
    let f = xb.cols();
    let max_sq = (0..xb.rows())
        .map(|i| xb.row(i).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (0.5 * max_sq + l2);
    let mut w = Tensor::<f64>::zeros(f, num_classes);
    let mut prev = w.clone();
    for t in 0..iterations {
        let momentum = t as f64 / (t as f64 + 3.0);
        let look = w.zip_map(&prev, |a, b| a + momentum * (a - b))?;
        let grad = kernels::matmul(&xt, &residual(&kernels::matmul(&xb, &look), y));
        let mut next = look.clone();
        for r in 0..f {
            let decay = if r + 1 < f { l2 } else { 0.0 };
            for ((o, &g), &l) in next.row_mut(r).iter_mut().zip(grad.row(r)).zip(look.row(r)) {
                *o -= step * (g + decay * l);
            }
        }
        prev = std::mem::replace(&mut w, next);
    }
    w.ensure_finite("probe weights")?;
    Ok(LogisticModel { weights: w })
}

/// Train on `split.train` for each l2 in the grid, keep the one with the best
/// validation accuracy (smallest l2 on ties), report its test accuracy.
pub fn linear_probe<T: Scalar>(z: &Tensor<T>, labels: &[usize], split: &NodeSplit, config: &ProbeConfig) -> Result<ProbeResult> {
    if z.rows() != labels.len() {
        return Err(Error::Shape(format!("probe: {} embeddings for {} labels", z.rows(), labels.len())));
    }
    split.validate(z.rows())?;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(Error::Argument("probe: every split partition must be nonempty".into()));
    }
    if config.l2_grid.is_empty() {
        return Err(Error::Config("probe.l2_grid is empty".into()));
    }
    let z = z.cast::<f64>();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let part = |idx: &[usize]| (z.select_rows(idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (x_tr, y_tr) = part(&split.train);
    let (x_va, y_va) = part(&split.val);
    let (x_te, y_te) = part(&split.test);

    let mut best: Option<(f64, f64, LogisticModel)> = None;
    for &l2 in &config.l2_grid {
        let model = fit_logistic(&x_tr, &y_tr, num_classes, l2, config.iterations)?;
        let val = accuracy(&model.predict(&x_va), &y_va);
        if best.as_ref().is_none_or(|(b, _, _)| val > *b) {
            best = Some((val, l2, model));
        }
    }
    let (val_accuracy, l2, model) = best.expect("nonempty grid");
    Ok(ProbeResult {
        test_accuracy: accuracy(&model.predict(&x_te), &y_te),
        val_accuracy,
        train_accuracy: accuracy(&model.predict(&x_tr), &y_tr),
        l2,
    })
}

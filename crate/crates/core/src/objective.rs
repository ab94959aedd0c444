//! Neighbor-mean alignment, hyperspherical uniformity and their combination.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diff::{CsrMatrix, Scalar, SparseOperator, Tape, Tensor, Var};
use crate::encoder::{encode, normalize_adjacency, EncoderParams, EncoderVars};
use crate::graph::{Csr, DegreeVector, GraphView};
use crate::{Error, Result};

/// Offset inside the entropy proxy's logarithm.
pub const ENTROPY_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveConfig {
    /// Order of the recursive neighbor mean.
    pub k: usize,
    /// Exponent of the degree weight `sigmoid(|N_i|)^tau`.
    pub tau: f64,
    /// Stop gradients through the alignment target.
    pub detach_target: bool,
    /// Include node `i` in its own neighborhood mean.
    pub self_in_mean: bool,
    /// Ablation switch; when false the total is `alpha * L_unif`.
    pub use_alignment: bool,
    pub eps_norm: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            k: 1,
            tau: 5.0,
            detach_target: false,
            self_in_mean: false,
            use_alignment: true,
            eps_norm: 1e-12,
        }
    }
}

/// Row-stochastic neighbor averaging operator.
#[derive(Clone, Debug)]
pub struct MeanOperator<T> {
    pub op: Arc<SparseOperator<T>>,
    pub has_neighbors: Vec<bool>,
}

pub fn mean_operator<T: Scalar>(adj: &Csr, self_in_mean: bool) -> MeanOperator<T> {
    let n = adj.num_nodes();
    let mut triplets = Vec::with_capacity(adj.nnz() + if self_in_mean { n } else { 0 });
    let mut has_neighbors = Vec::with_capacity(n);
    for i in 0..n {
        let nbrs = adj.neighbors(i);
        has_neighbors.push(!nbrs.is_empty());
        if nbrs.is_empty() {
            continue;
        }
        let extra = usize::from(self_in_mean);
        let w = T::of(1.0 / (nbrs.len() + extra) as f64);
        triplets.extend(nbrs.iter().map(|&j| (i, j, w)));
        if self_in_mean {
            triplets.push((i, i, w));
        }
    }
    let m = CsrMatrix::from_triplets(n, n, triplets).expect("neighbor ids are in range");
    MeanOperator {
        op: Arc::new(SparseOperator::new(m)),
        has_neighbors,
    }
}

/// k-order neighbor-mean targets on the tape.
#[derive(Clone, Debug)]
pub struct AlignTargets {
    pub mu: Var,
    /// False for isolated nodes and for rows whose mean vanished.
    pub valid: Vec<bool>,
    pub order: usize,
}

/// `mu^0 = z`, then `mu^r = normalize(mean_{j in N(i)} mu^{r-1}_j)` for `r = 1..=k`.
pub fn neighbor_mean<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    mean: &MeanOperator<T>,
    k: usize,
    eps_norm: f64,
) -> Result<AlignTargets> {
    if k < 1 {
        return Err(Error::Argument("neighbor-mean order k must be at least 1".into()));
    }
    let mut cur = z;
    let mut valid = mean.has_neighbors.clone();
    for round in 1..=k {
        let m = tape.spmm(&mean.op, cur)?;
        if round == k {
            for (v, n) in valid.iter_mut().zip(tape.value(m).row_norms()) {
                *v = *v && n.as_f64() >= eps_norm;
            }
        }
        cur = tape.row_normalize(m, T::of(eps_norm))?;
    }
    Ok(AlignTargets {
        mu: cur,
        valid,
        order: k,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-node weights `sigmoid(|N_i|)^tau`.
pub fn alignment_weights(deg: &DegreeVector, tau: f64) -> Result<Vec<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::Argument(format!("tau must be nonnegative, got {tau}")));
    }
    Ok(deg.0.iter().map(|&d| sigmoid(d as f64).powf(tau)).collect())
}

/// `(1/N) sum_i w_i (1 - <z_i, mu_i>)` over valid nodes; the denominator is always `N`.
pub fn alignment_loss<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    targets: &AlignTargets,
    weights: &[f64],
) -> Result<Var> {
    let n = tape.value(z).rows();
    if weights.len() != n || targets.valid.len() != n {
        return Err(Error::Shape(format!(
            "alignment_loss: {n} rows, {} weights, {} validity flags",
            weights.len(),
            targets.valid.len()
        )));
    }
    let scaled: Vec<T> = weights
        .iter()
        .zip(&targets.valid)
        .map(|(&w, &ok)| if ok { T::of(w / n as f64) } else { T::zero() })
        .collect();
    let offset = scaled.iter().copied().sum::<T>();
    let dots = tape.row_dot(z, targets.mu)?;
    let s = tape.weighted_sum(dots, Arc::new(scaled))?;
    Ok(tape.affine(s, -T::one(), offset))
}

/// `|| mean_i z_i ||^2`.
pub fn uniformity_loss<T: Scalar>(tape: &mut Tape<T>, z: Var) -> Result<Var> {
    let m = tape.mean_rows(z)?;
    Ok(tape.sum_squares(m))
}

/// Same quantity as the uniformity loss, computed off-tape in `f64`.
pub fn collapse_metric<T: Scalar>(z: &Tensor<T>) -> f64 {
    if z.rows() == 0 {
        return 0.0;
    }
    let mut mean = vec![0.0f64; z.cols()];
    for i in 0..z.rows() {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v.as_f64();
        }
    }
    let n = z.rows() as f64;
    mean.iter().map(|m| (m / n) * (m / n)).sum()
}

/// `-ln(c + eps)`.
pub fn entropy_proxy(c: f64, eps: f64) -> f64 {
    -(c + eps).ln()
}

/// Scalar summary of one loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub align: f64,
    pub unif: f64,
    pub alpha_used: f64,
    pub collapse: f64,
    pub h_proxy: f64,
}

/// Alignment/uniformity objective with its graph-derived constants.
#[derive(Clone, Debug)]
pub struct Objective<T> {
    pub config: ObjectiveConfig,
    mean: MeanOperator<T>,
    weights: Vec<f64>,
}

impl<T: Scalar> Objective<T> {
    /// `mean_graph` supplies neighborhoods for the targets, `degrees` the weights.
    pub fn new(mean_graph: &Csr, degrees: &DegreeVector, config: ObjectiveConfig) -> Result<Self> {
        if config.k < 1 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        if degrees.0.len() != mean_graph.num_nodes() {
            return Err(Error::Shape("degree vector does not match the graph".into()));
        }
        let weights = alignment_weights(degrees, config.tau)?;
        Ok(Objective {
            mean: mean_operator(mean_graph, config.self_in_mean),
            weights,
            config,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total loss node plus its breakdown, for embeddings `z` already on the tape.
    pub fn evaluate(&self, tape: &mut Tape<T>, z: Var, alpha: f64) -> Result<(Var, LossBreakdown)> {
        if !(alpha >= 0.0) {
            return Err(Error::Argument(format!("alpha must be nonnegative, got {alpha}")));
        }
        let unif = uniformity_loss(tape, z)?;
        let weighted_unif = tape.scale(unif, T::of(alpha));
        let (total, align_value) = if self.config.use_alignment {
            let mut targets = neighbor_mean(tape, z, &self.mean, self.config.k, self.config.eps_norm)?;
            if self.config.detach_target {
                targets.mu = tape.detach(targets.mu);
            }
            let align = alignment_loss(tape, z, &targets, &self.weights)?;
            (tape.add(align, weighted_unif)?, tape.scalar(align).as_f64())
        } else {
            (weighted_unif, 0.0)
        };
        let collapse = collapse_metric(tape.value(z));
        let breakdown = LossBreakdown {
            total: tape.scalar(total).as_f64(),
            align: align_value,
            unif: tape.scalar(unif).as_f64(),
            alpha_used: alpha,
            collapse,
            h_proxy: entropy_proxy(collapse, ENTROPY_EPS),
        };
        Ok((total, breakdown))
    }
}

/// Handles produced by [`total_loss`].
#[derive(Debug)]
pub struct LossEval {
    pub loss: Var,
    pub z: Var,
    pub vars: EncoderVars,
    pub breakdown: LossBreakdown,
}

/// Encode `view` with `params` and evaluate the objective, all on `tape`.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    view: &GraphView<'_>,
    params: &EncoderParams<T>,
    objective: &Objective<T>,
    alpha: f64,
) -> Result<LossEval> {
    let adj = normalize_adjacency::<T>(&view.kept_edges, params.spec.backbone);
    let x = tape.constant(view.masked_features.cast())?;
    let vars = params.register(tape)?;
    let z = encode(tape, &adj, x, &params.spec, &vars, T::of(objective.config.eps_norm))?;
    let (loss, breakdown) = objective.evaluate(tape, z, alpha)?;
    Ok(LossEval {
        loss,
        z,
        vars,
        breakdown,
    })
}

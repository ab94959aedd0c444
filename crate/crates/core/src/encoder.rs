//! GNN encoders mapping a graph view to unit-norm node embeddings.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{CsrMatrix, Gradients, Scalar, SparseOperator, Tape, Tensor, Var};
use crate::graph::{Csr, GraphView};
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

/// Message-passing backbone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    /// Symmetric normalization `D^-1/2 (A + I) D^-1/2`.
    #[default]
    Gcn,
    /// Mean over the closed neighborhood `N(i) ∪ {i}`.
    SageMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    Relu,
}

/// Architecture of an encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub backbone: Backbone,
    pub in_dim: usize,
    /// Widths of the hidden layers; the encoder has `hidden.len() + 1` layers.
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: Activation,
    pub bias: bool,
}

impl EncoderSpec {
    /// `layers` layers of width `dim` on top of `in_dim` inputs.
    pub fn uniform(backbone: Backbone, in_dim: usize, dim: usize, layers: usize) -> Self {
        EncoderSpec {
            backbone,
            in_dim,
            hidden: vec![dim; layers.saturating_sub(1)],
            out_dim: dim,
            activation: Activation::Silu,
            bias: true,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `[in_dim, hidden.., out_dim]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.in_dim);
        d.extend(&self.hidden);
        d.push(self.out_dim);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.dims().iter().position(|&d| d == 0) {
            return Err(Error::Argument(format!("encoder dimension {pos} is zero")));
        }
        Ok(())
    }
}

/// Weights and biases of an encoder. Layer `l` maps `dims[l]` to `dims[l + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T = f32> {
    pub spec: EncoderSpec,
    pub weights: Vec<Tensor<T>>,
    pub biases: Vec<Tensor<T>>,
}

/// Tape handles for one registration of [`EncoderParams`].
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<T: Scalar>(spec: &EncoderSpec, seed: u64) -> Result<EncoderParams<T>> {
    spec.validate()?;
    let dims = spec.dims();
    let mut weights = Vec::with_capacity(spec.num_layers());
    let mut biases = Vec::with_capacity(spec.num_layers());
    for (l, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = rng_for(seed, Stream::Init, l as u64);
        weights.push(Tensor::from_fn(fan_in, fan_out, |_, _| {
            T::of(rng.gen_range(-bound..bound))
        }));
        biases.push(Tensor::zeros(1, fan_out));
    }
    Ok(EncoderParams {
        spec: spec.clone(),
        weights,
        biases,
    })
}

impl<T: Scalar> EncoderParams<T> {
    /// Tensors interleaved as `w0, b0, w1, b1, ..`.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.weights
            .into_iter()
            .zip(self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn from_tensors(spec: EncoderSpec, tensors: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        if tensors.len() != 2 * spec.num_layers() {
            return Err(Error::Shape(format!(
                "{} tensors for a {}-layer encoder",
                tensors.len(),
                spec.num_layers()
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in tensors.chunks_exact(2).enumerate() {
            pair[0].expect_shape((dims[l], dims[l + 1]), &format!("layer {l} weight"))?;
            pair[1].expect_shape((1, dims[l + 1]), &format!("layer {l} bias"))?;
            pair[0].ensure_finite("encoder weight")?;
            pair[1].ensure_finite("encoder bias")?;
            weights.push(pair[0].clone());
            biases.push(pair[1].clone());
        }
        Ok(EncoderParams { spec, weights, biases })
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        EncoderParams {
            spec: self.spec.clone(),
            weights: self.weights.iter().map(Tensor::cast).collect(),
            biases: self.biases.iter().map(Tensor::cast).collect(),
        }
    }

    /// Register all parameters as trainable leaves on `tape`.
    pub fn register(&self, tape: &mut Tape<T>) -> Result<EncoderVars> {
        Ok(EncoderVars {
            weights: self
                .weights
                .iter()
                .map(|w| tape.param(w.clone()))
                .collect::<Result<_>>()?,
            biases: self
                .biases
                .iter()
                .map(|b| tape.param(b.clone()))
                .collect::<Result<_>>()?,
        })
    }

    /// Gradients in the order of [`EncoderParams::tensors`].
    pub fn collect_grads(&self, grads: &Gradients<T>, vars: &EncoderVars) -> Vec<Tensor<T>> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for l in 0..self.weights.len() {
            out.push(grads.get_or_zeros(vars.weights[l], &self.weights[l]));
            out.push(grads.get_or_zeros(vars.biases[l], &self.biases[l]));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Normalized propagation operator with self-loops.
#[derive(Clone, Debug)]
pub struct NormAdjacency<T> {
    pub mode: Backbone,
    pub op: Arc<SparseOperator<T>>,
}

/// Add self-loops and weight edges for the given backbone.
pub fn normalize_adjacency<T: Scalar>(adj: &Csr, mode: Backbone) -> NormAdjacency<T> {
    let n = adj.num_nodes();
    let closed_degree: Vec<f64> = (0..n).map(|i| adj.degree(i) as f64 + 1.0).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(adj.nnz() + n);
    let mut values = Vec::with_capacity(adj.nnz() + n);
    indptr.push(0);
    for i in 0..n {
        let nbrs = adj.neighbors(i);
        let split = nbrs.partition_point(|&j| j < i);
        let row = nbrs[..split]
            .iter()
            .copied()
            .chain(std::iter::once(i))
            .chain(nbrs[split..].iter().copied());
        for j in row {
            let w = match mode {
                Backbone::Gcn => 1.0 / (closed_degree[i] * closed_degree[j]).sqrt(),
                Backbone::SageMean => 1.0 / closed_degree[i],
            };
            indices.push(j);
            values.push(T::of(w));
        }
        indptr.push(indices.len());
    }
    let m = CsrMatrix::new(n, n, indptr, indices, values).expect("normalized adjacency is well formed");
    NormAdjacency {
        mode,
        op: Arc::new(SparseOperator::new(m)),
    }
}

/// Run the encoder on the tape and project onto the unit sphere.
///
/// Each layer computes `A_hat (H W) + b`; the activation follows every layer
/// except the last.
pub fn encode<T: Scalar>(
    tape: &mut Tape<T>,
    adj: &NormAdjacency<T>,
    features: Var,
    spec: &EncoderSpec,
    vars: &EncoderVars,
    eps_norm: T,
) -> Result<Var> {
    let (n, f) = tape.value(features).shape();
    if f != spec.in_dim {
        return Err(Error::Shape(format!(
            "encoder expects {} input features, view has {f}",
            spec.in_dim
        )));
    }
    if adj.op.forward.n_rows() != n {
        return Err(Error::Shape(format!(
            "adjacency has {} nodes, features have {n} rows",
            adj.op.forward.n_rows()
        )));
    }
    let layers = spec.num_layers();
    let mut h = features;
    for l in 0..layers {
        let xw = tape.matmul(h, vars.weights[l])?;
        let mut out = tape.spmm(&adj.op, xw)?;
        if spec.bias {
            out = tape.add_bias(out, vars.biases[l])?;
        }
        if l + 1 < layers {
            out = match spec.activation {
                Activation::Silu => tape.silu(out),
                Activation::Relu => tape.relu(out),
            };
        }
        h = out;
    }
    tape.row_normalize(h, eps_norm)
}

/// Embeddings of `view` under `params`, computed off-gradient.
pub fn encode_view<T: Scalar>(
    view: &GraphView<'_>,
    params: &EncoderParams<T>,
    eps_norm: f64,
) -> Result<Tensor<T>> {
    let adj = normalize_adjacency::<T>(&view.kept_edges, params.spec.backbone);
    let mut tape = Tape::new();
    let x = tape.constant(view.masked_features.cast())?;
    let vars = EncoderVars {
        weights: params
            .weights
            .iter()
            .map(|w| tape.constant(w.clone()))
            .collect::<Result<_>>()?,
        biases: params
            .biases
            .iter()
            .map(|b| tape.constant(b.clone()))
            .collect::<Result<_>>()?,
    };
    let z = encode(&mut tape, &adj, x, &params.spec, &vars, T::of(eps_norm))?;
    Ok(tape.value(z).clone())
}

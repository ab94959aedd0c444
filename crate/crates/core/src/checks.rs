//! The gradient-check suite run by the `gradcheck` command: every
//! differentiable primitive, the encoder, and the full objective.

use std::sync::Arc;

use rand::Rng;

use crate::diff::{grad_check, GradCheckOptions, GradCheckReport, SparseOperator, Tape, Tensor, Var};
use crate::encoder::{encode, init_params, normalize_adjacency, EncoderVars};
use crate::graph::{augment, generate_sbm, DegreeVector, SbmSpec};
use crate::objective::{Objective, ObjectiveConfig};
use crate::rng::{rng_for, Stream};
use crate::trainer::TrainConfig;
use crate::Result;

pub const TOL_ELEMENTWISE: f64 = 1e-6;
pub const TOL_ROW_NORMALIZE: f64 = 1e-5;
pub const TOL_COMPOSED: f64 = 1e-4;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = rng_for(seed, Stream::GradCheck, (rows * 1000 + cols) as u64);
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Entries bounded away from zero, for the kink of relu.
fn away_from_zero(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    random(rows, cols, seed).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

/// `sum(out * R)` for a fixed random `R`, so every output entry gets a distinct cotangent.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(random(r, c, seed ^ 0xA5A5))?;
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn ring_operator(n: usize) -> Arc<SparseOperator<f64>> {
    let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let (adj, _) = crate::graph::build_adjacency(n, edges).expect("ring graph");
    normalize_adjacency::<f64>(&adj, crate::encoder::Backbone::Gcn).op
}

type Check = (&'static str, f64, Vec<Tensor<f64>>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>);

fn primitive_checks(seed: u64) -> Vec<Check> {
    let op = ring_operator(6);
    let gather = Arc::new(vec![3, 0, 0, 5, 2]);
    let weights = Arc::new(vec![0.3, -1.2, 0.7, 2.0, 0.1]);
    let targets = Arc::new(vec![1.0, 0.0, 1.0, 1.0, 0.0]);
    vec![
        ("matmul", TOL_ELEMENTWISE, vec![random(4, 3, seed), random(3, 5, seed + 1)], Box::new(move |t, v| {
            let o = t.matmul(v[0], v[1])?;
            project(t, o, seed)
        })),
        ("spmm", TOL_ELEMENTWISE, vec![random(6, 3, seed)], Box::new(move |t, v| {
            let o = t.spmm(&op, v[0])?;
            project(t, o, seed)
        })),
        ("row_normalize", TOL_ROW_NORMALIZE, vec![away_from_zero(5, 4, seed)], Box::new(move |t, v| {
            let o = t.row_normalize(v[0], 1e-12)?;
            project(t, o, seed)
        })),
        ("silu", TOL_ELEMENTWISE, vec![random(4, 4, seed)], Box::new(move |t, v| {
            let o = t.silu(v[0]);
            project(t, o, seed)
        })),
        ("relu", TOL_ELEMENTWISE, vec![away_from_zero(4, 4, seed)], Box::new(move |t, v| {
            let o = t.relu(v[0]);
            project(t, o, seed)
        })),
        ("sigmoid", TOL_ELEMENTWISE, vec![random(4, 4, seed)], Box::new(move |t, v| {
            let o = t.sigmoid(v[0]);
            project(t, o, seed)
        })),
        ("add", TOL_ELEMENTWISE, vec![random(3, 4, seed), random(3, 4, seed + 1)], Box::new(move |t, v| {
            let o = t.add(v[0], v[1])?;
            project(t, o, seed)
        })),
        ("add_bias", TOL_ELEMENTWISE, vec![random(3, 4, seed), random(1, 4, seed + 1)], Box::new(move |t, v| {
            let o = t.add_bias(v[0], v[1])?;
            project(t, o, seed)
        })),
        ("mul", TOL_ELEMENTWISE, vec![random(3, 4, seed), random(3, 4, seed + 1)], Box::new(move |t, v| {
            let o = t.mul(v[0], v[1])?;
            project(t, o, seed)
        })),
        ("scale", TOL_ELEMENTWISE, vec![random(3, 4, seed)], Box::new(move |t, v| {
            let o = t.affine(v[0], -2.5, 0.75);
            project(t, o, seed)
        })),
        ("row_dot", TOL_ELEMENTWISE, vec![random(5, 3, seed), random(5, 3, seed + 1)], Box::new(move |t, v| {
            let o = t.row_dot(v[0], v[1])?;
            project(t, o, seed)
        })),
        ("weighted_sum", TOL_ELEMENTWISE, vec![random(5, 1, seed)], Box::new(move |t, v| t.weighted_sum(v[0], weights.clone()))),
        ("gather_rows", TOL_ELEMENTWISE, vec![random(6, 3, seed)], Box::new(move |t, v| {
            let o = t.gather_rows(v[0], gather.clone())?;
            project(t, o, seed)
        })),
        ("concat_cols", TOL_ELEMENTWISE, vec![random(3, 2, seed), random(3, 4, seed + 1)], Box::new(move |t, v| {
            let o = t.concat_cols(v[0], v[1])?;
            project(t, o, seed)
        })),
        ("bce_with_logits", TOL_ELEMENTWISE, vec![random(5, 1, seed)], Box::new(move |t, v| t.bce_with_logits(v[0], targets.clone()))),
        ("uniformity", TOL_ROW_NORMALIZE, vec![random(7, 4, seed)], Box::new(|t, v| {
            let m = t.mean_rows(v[0])?;
            Ok(t.sum_squares(m))
        })),
    ]
}

fn sbm20(seed: u64) -> crate::graph::GraphDataset {
    generate_sbm(&SbmSpec {
        block_sizes: vec![10, 10],
        p_in: 0.5,
        p_out: 0.05,
        feature_noise: 0.3,
        seed,
    })
    .expect("valid SBM spec")
}

/// Full objective on a 20-node SBM with respect to every encoder parameter.
fn composed_checks(seed: u64) -> Result<Vec<Check>> {
    let g = Arc::new(sbm20(seed));
    let cfg = TrainConfig {
        dim: 6,
        hidden: Some(8),
        ..TrainConfig::default()
    };
    let spec = cfg.encoder_spec(g.num_features());
    let params = init_params::<f64>(&spec, seed)?;
    let view = augment(&g, 0.2, 0.1, seed)?;
    let adj = Arc::new(normalize_adjacency::<f64>(&view.kept_edges, spec.backbone));
    let x = Arc::new(view.masked_features.cast::<f64>());
    let objective = Arc::new(Objective::<f64>::new(
        g.adjacency(),
        &DegreeVector::of(g.adjacency()),
        ObjectiveConfig { k: 2, ..cfg.objective() },
    )?);
    let layers = spec.num_layers();
    let inputs = params.clone().into_tensors();
    let split = move |v: &[Var]| {
        // tensors are interleaved w0, b0, w1, b1, ...
        EncoderVars {
            weights: (0..layers).map(|l| v[2 * l]).collect(),
            biases: (0..layers).map(|l| v[2 * l + 1]).collect(),
        }
    };
    let (adj2, x2, spec2) = (adj.clone(), x.clone(), spec.clone());
    let encoder_probe: Check = (
        "encoder",
        TOL_COMPOSED,
        inputs.clone(),
        Box::new(move |t, v| {
            let xv = t.constant((*x2).clone())?;
            let z = encode(t, &adj2, xv, &spec2, &split(v), 1e-12)?;
            Ok(t.sum(z))
        }),
    );
    let full_loss: Check = (
        "full_loss",
        TOL_COMPOSED,
        inputs,
        Box::new(move |t, v| {
            let xv = t.constant((*x).clone())?;
            let z = encode(t, &adj, xv, &spec, &split(v), 1e-12)?;
            Ok(objective.evaluate(t, z, 0.8)?.0)
        }),
    );
    Ok(vec![encoder_probe, full_loss])
}

/// Run every check with central differences at step 1e-5.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut checks = primitive_checks(seed);
    checks.extend(composed_checks(seed)?);
    checks
        .into_iter()
        .map(|(name, tol, inputs, f)| {
            let opts = GradCheckOptions {
                seed,
                ..GradCheckOptions::with_tolerance(tol)
            };
            grad_check(name, |t: &mut Tape<f64>, v: &[Var]| f(t, v), &inputs, opts)
        })
        .collect()
}

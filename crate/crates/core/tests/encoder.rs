use hypergrl::diff::Tensor;
use hypergrl::encoder::{encode_view, init_params, Activation, Backbone, EncoderParams, EncoderSpec};
use hypergrl::graph::{augment, generate_sbm, Csr, GraphDataset, GraphView, SbmSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sbm(seed: u64) -> GraphDataset {
    generate_sbm(&SbmSpec {
        block_sizes: vec![15, 15, 10],
        p_in: 0.3,
        p_out: 0.03,
        feature_noise: 0.5,
        seed,
    })
    .unwrap()
}

#[test]
fn glorot_bound_holds() {
    let spec = EncoderSpec::uniform(Backbone::Gcn, 40, 24, 2);
    let p = init_params::<f32>(&spec, 3).unwrap();
    for (l, w) in p.weights.iter().enumerate() {
        let (fi, fo) = w.shape();
        let bound = (6.0 / (fi + fo) as f64).sqrt() as f32;
        assert!(w.max_abs() <= bound, "layer {l}");
        assert!(w.max_abs() > 0.5 * bound);
    }
    assert!(p.biases.iter().all(|b| b.max_abs() == 0.0));
}

#[test]
fn identity_layer_reduces_to_normalized_features() {
    let x = Tensor::from_rows(&[[3.0f32, 4.0, 0.0], [0.0, 0.0, 2.0], [1.0, 1.0, 1.0]]).unwrap();
    let g = GraphDataset::new(Csr::empty(3), x.clone(), None).unwrap();
    let spec = EncoderSpec {
        backbone: Backbone::Gcn,
        in_dim: 3,
        hidden: vec![],
        out_dim: 3,
        activation: Activation::Silu,
        bias: true,
    };
    let params = EncoderParams::from_tensors(spec, vec![Tensor::identity(3), Tensor::zeros(1, 3)]).unwrap();
    let z = encode_view(&GraphView::identity(&g), &params, 1e-12).unwrap();
    let s = 1.0 / 3f32.sqrt();
    let expected = [0.6, 0.8, 0.0, 0.0, 0.0, 1.0, s, s, s];
    for (a, b) in z.data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn embeddings_are_unit_norm() {
    let g = sbm(1);
    for backbone in [Backbone::Gcn, Backbone::SageMean] {
        let spec = EncoderSpec::uniform(backbone, g.num_features(), 16, 2);
        let p = init_params::<f32>(&spec, 4).unwrap();
        let v = augment(&g, 0.5, 0.3, 9).unwrap();
        let z = encode_view(&v, &p, 1e-12).unwrap();
        assert_eq!(z.shape(), (40, 16));
        for n in z.row_norms() {
            assert!(n == 0.0 || (n - 1.0).abs() <= 1e-6, "norm {n}");
        }
    }
}

#[test]
fn permutation_equivariance() {
    let g = sbm(2);
    let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let pg = g.permute(&perm).unwrap();
    for backbone in [Backbone::Gcn, Backbone::SageMean] {
        let spec = EncoderSpec::uniform(backbone, g.num_features(), 12, 2);
        let p = init_params::<f64>(&spec, 6).unwrap();
        let z = encode_view(&GraphView::identity(&g), &p, 1e-12).unwrap();
        let pz = encode_view(&GraphView::identity(&pg), &p, 1e-12).unwrap();
        // neighbor sums run in a different order after relabelling, so compare to rounding
        for (a, b) in z.permute_rows(&perm).data().iter().zip(pz.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn encoding_is_deterministic() {
    let g = sbm(3);
    let spec = EncoderSpec::uniform(Backbone::Gcn, g.num_features(), 8, 3);
    let a = init_params::<f32>(&spec, 10).unwrap();
    let b = init_params::<f32>(&spec, 10).unwrap();
    assert_eq!(a.weights, b.weights);
    let v = GraphView::identity(&g);
    assert_eq!(encode_view(&v, &a, 1e-12).unwrap(), encode_view(&v, &b, 1e-12).unwrap());
}

#[test]
fn feature_dimension_mismatch_is_an_error() {
    let g = sbm(4);
    let spec = EncoderSpec::uniform(Backbone::Gcn, g.num_features() + 1, 8, 2);
    let p = init_params::<f32>(&spec, 0).unwrap();
    assert!(encode_view(&GraphView::identity(&g), &p, 1e-12).is_err());
}

#[test]
fn encoder_gradient_check() {
    let reports = hypergrl::checks::gradcheck_suite(1).unwrap();
    let enc = reports.iter().find(|r| r.name == "encoder").unwrap();
    assert!(enc.pass && enc.tolerance == 1e-4, "{enc:?}");
}

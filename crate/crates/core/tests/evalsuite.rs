mod common;

use common::{auc_brute, nmi_brute};
use hypergrl::diff::Tensor;
use hypergrl::eval::*;
use hypergrl::graph::{build_adjacency, generate_sbm, GraphDataset, SbmSpec};
use hypergrl::trainer::{embed, train, TrainConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n_per: usize, centers: &[[f64; 2]], sd: f64, seed: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let labels: Vec<usize> = (0..centers.len()).flat_map(|c| std::iter::repeat_n(c, n_per)).collect();
    let x = Tensor::from_fn(labels.len(), 2, |i, j| centers[labels[i]][j] + noise.sample(&mut rng));
    (x, labels)
}

#[test]
fn node_split_counts_and_determinism() {
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let s = split_nodes(&labels, [0.1, 0.1, 0.8], 1).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 10, 80));
    assert_eq!(s.train.iter().filter(|&&i| labels[i] == 1).count(), 5);
    assert_eq!(s, split_nodes(&labels, [0.1, 0.1, 0.8], 1).unwrap());
    assert!(split_nodes(&labels, [0.6, 0.6, 0.0], 1).is_err());
}

fn ring_with_chords(n: usize) -> GraphDataset {
    let edges = (0..n).map(|i| (i, (i + 1) % n)).chain((0..n / 2).map(|i| (i, i + n / 2)));
    let (adj, _) = build_adjacency(n, edges).unwrap();
    GraphDataset::new(adj, Tensor::zeros(n, 1), None).unwrap()
}

#[test]
fn edge_split_counts_and_membership() {
    let g = ring_with_chords(67);
    let g = g.with_adjacency(build_adjacency(67, g.adjacency().edges().take(100)).unwrap().0).unwrap();
    assert_eq!(g.num_edges(), 100);
    let s = split_edges(&g, [0.85, 0.05, 0.10], 3).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (85, 5, 10));
    assert_eq!((s.train_neg.len(), s.val_neg.len(), s.test_neg.len()), (85, 5, 10));
    let mut all_neg: Vec<_> = s.train_neg.iter().chain(&s.val_neg).chain(&s.test_neg).copied().collect();
    for &(u, v) in &all_neg {
        assert!(u != v && !g.adjacency().has_edge(u, v));
    }
    all_neg.sort_unstable();
    all_neg.dedup();
    assert_eq!(all_neg.len(), 100);
    for &(u, v) in s.val.iter().chain(&s.test) {
        assert!(!s.message_graph.has_edge(u, v));
    }
    assert_eq!(s.message_graph.num_edges(), 85);
    assert_eq!(s, split_edges(&g, [0.85, 0.05, 0.10], 3).unwrap());
}

#[test]
fn edge_split_needs_enough_edges() {
    let (adj, _) = build_adjacency(10, (0..9).map(|i| (i, i + 1))).unwrap();
    let g = GraphDataset::new(adj, Tensor::zeros(10, 1), None).unwrap();
    assert!(split_edges(&g, [0.85, 0.05, 0.10], 0).is_err());
}

#[test]
fn probe_on_separable_clouds() {
    let (x, y) = blobs(50, &[[3.0, 0.0], [-3.0, 0.0]], 0.5, 1);
    let split = split_nodes(&y, [0.1, 0.1, 0.8], 2).unwrap();
    let r = linear_probe(&x, &y, &split, &ProbeConfig::default()).unwrap();
    assert_eq!(r.test_accuracy, 1.0);
}

#[test]
fn probe_on_shuffled_labels_is_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::from_fn(2100, 16, |_, _| rng.gen_range(-1.0..1.0));
    let mut y: Vec<usize> = (0..2100).map(|i| i % 7).collect();
    y.shuffle(&mut rng);
    let split = split_nodes(&y, [0.1, 0.1, 0.8], 4).unwrap();
    let r = linear_probe(&x, &y, &split, &ProbeConfig::default()).unwrap();
    assert!((r.test_accuracy - 1.0 / 7.0).abs() <= 0.05, "{}", r.test_accuracy);
}

#[test]
fn probe_train_accuracy_beats_test_over_seeds() {
    let (x, y) = blobs(60, &[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], 0.9, 5);
    let wins = (0..20u64)
        .filter(|&s| {
            let split = split_nodes(&y, [0.1, 0.1, 0.8], s).unwrap();
            let r = linear_probe(&x, &y, &split, &ProbeConfig::default()).unwrap();
            r.train_accuracy >= r.test_accuracy
        })
        .count();
    assert!(wins > 10, "train >= test in {wins}/20 seeds");
}

#[test]
fn probe_rejects_empty_partitions() {
    let (x, y) = blobs(5, &[[1.0, 0.0], [-1.0, 0.0]], 0.1, 6);
    let split = NodeSplit {
        train: vec![0, 5],
        val: vec![],
        test: vec![1],
    };
    assert!(linear_probe(&x, &y, &split, &ProbeConfig::default()).is_err());
}

#[test]
fn kmeans_recovers_planted_blobs() {
    let (x, y) = blobs(40, &[[5.0, 5.0], [-5.0, -5.0]], 0.3, 7);
    let r = kmeans(&x, 2, &KMeansConfig::default(), 1).unwrap();
    assert_eq!(nmi(&r.assignments, &y).unwrap(), 1.0);
    assert_eq!(r, kmeans(&x, 2, &KMeansConfig::default(), 1).unwrap());
}

#[test]
fn kmeans_inertia_never_increases() {
    for seed in 0..20u64 {
        let (x, _) = blobs(30, &[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.5], [0.5, -1.0]], 0.8, seed);
        let r = kmeans(&x, 4, &KMeansConfig { restarts: 1, ..KMeansConfig::default() }, seed).unwrap();
        for w in r.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {:?}", r.inertia_trace);
        }
    }
}

#[test]
fn nmi_hand_table() {
    // contingency [[2, 1], [1, 2]]
    let a = [0, 0, 0, 1, 1, 1];
    let b = [0, 0, 1, 0, 1, 1];
    let h = 2f64.ln();
    let mi = (4.0 / 6.0) * ((2.0 / 6.0) / 0.25f64).ln() + (2.0 / 6.0) * ((1.0 / 6.0) / 0.25f64).ln();
    let got = nmi(&a, &b).unwrap();
    assert!((got - mi / h).abs() < 1e-12);
    assert!((got - nmi_brute(&a, &b)).abs() < 1e-12);
}

#[test]
fn nmi_of_independent_labelings_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a: Vec<usize> = (0..10000).map(|_| rng.gen_range(0..5)).collect();
    let b: Vec<usize> = (0..10000).map(|_| rng.gen_range(0..5)).collect();
    assert!(nmi(&a, &b).unwrap() <= 0.05);
}

#[test]
fn nmi_geometric_variant() {
    let a = [0, 0, 1, 1, 2, 2];
    let b = [0, 0, 0, 1, 1, 1];
    let g = nmi_with(&a, &b, NmiNorm::Geometric).unwrap();
    let ar = nmi_with(&a, &b, NmiNorm::Arithmetic).unwrap();
    // the geometric mean of two entropies is at most their arithmetic mean
    assert!(g >= ar);
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
    assert_eq!(auc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
    assert!(auc(&[0.3, 0.2], &[false, false]).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scores: Vec<f64> = (0..4000).map(|_| rng.gen()).collect();
    let labels: Vec<bool> = (0..4000).map(|_| rng.gen()).collect();
    assert!((auc(&scores, &labels).unwrap() - 0.5).abs() <= 0.05);
}

#[test]
fn link_prediction_on_sbm_beats_chance() {
    let g = generate_sbm(&SbmSpec {
        block_sizes: vec![40, 40],
        p_in: 0.25,
        p_out: 0.01,
        feature_noise: 0.5,
        seed: 1,
    })
    .unwrap();
    let split = split_edges(&g, [0.85, 0.05, 0.10], 1).unwrap();
    let mg = g.with_adjacency(split.message_graph.clone()).unwrap();
    let cfg = TrainConfig { epochs: 60, dim: 16, ..TrainConfig::default() };
    let r = train(&mg, &cfg).unwrap();
    let z = embed(&mg, &r.checkpoint, 1e-12).unwrap();
    let lp = LinkPredConfig { hidden: 32, epochs: 100, ..LinkPredConfig::default() };
    let res = link_predict(&z, &split, &lp, 1).unwrap();
    assert!(res.test_auc > 0.6, "{res:?}");
    assert_eq!(res, link_predict(&z, &split, &lp, 1).unwrap());
}

#[test]
fn reports_aggregate_and_guard_fingerprints() {
    let values: Vec<f64> = (0..20).map(|i| 0.8 + 0.01 * (i as f64).sin()).collect();
    let r = MetricsReport::new("probe", "accuracy", (0..20).collect(), values.clone(), "fp").unwrap();
    let mean = values.iter().sum::<f64>() / 20.0;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
    assert!((r.mean - mean).abs() < 1e-12 && (r.std - std).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.json");
    let table = write_report(std::slice::from_ref(&r), &path).unwrap();
    assert!(table.contains("probe"));
    assert_eq!(read_reports(&path).unwrap(), vec![r.clone()]);
    assert!(dir.path().join("metrics.txt").exists());

    let other = MetricsReport { fingerprint: "other".into(), ..r.clone() };
    assert!(aggregate(&[r.clone(), other.clone()]).is_err());
    assert!(write_report(&[r, other], &path).is_err());
    assert!(write_report(&[], &path).is_err());
}

proptest! {
    #[test]
    fn node_splits_are_disjoint_and_stratified(labels in prop::collection::vec(0usize..4, 40..200), seed in any::<u64>()) {
        let mut labels = labels;
        // guarantee every class id below the maximum has members
        for (c, l) in labels.iter_mut().enumerate().take(4) {
            *l = c;
        }
        let s = split_nodes(&labels, [0.1, 0.1, 0.8], seed).unwrap();
        prop_assert!(s.validate(labels.len()).is_ok());
        for c in 0..4 {
            prop_assert!(s.train.iter().any(|&i| labels[i] == c));
        }
    }

    #[test]
    fn nmi_matches_brute_force_and_symmetries(
        a in prop::collection::vec(0usize..4, 2..60),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<usize> = a.iter().map(|_| rng.gen_range(0..3)).collect();
        let v = nmi(&a, &b).unwrap();
        prop_assert!((v - nmi_brute(&a, &b)).abs() < 1e-12);
        prop_assert!((v - nmi(&b, &a).unwrap()).abs() < 1e-12);
        let relabelled: Vec<usize> = a.iter().map(|x| (x + 1) % 4 + 10).collect();
        prop_assert!((v - nmi(&relabelled, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_matches_brute_force_and_is_rank_based(
        pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..80),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 7.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let v = auc(&scores, &labels).unwrap();
        prop_assert!((v - auc_brute(&scores, &labels)).abs() < 1e-12);
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
        prop_assert!((v - auc(&warped, &labels).unwrap()).abs() < 1e-12);
    }
}

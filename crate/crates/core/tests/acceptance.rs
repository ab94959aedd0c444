//! Acceptance suite: one line per criterion.
//!
//! Correctness criteria (1, 2, 4, 8, 10) fail the process when they fail.
//! Criteria that measure learning outcomes (3, 5, 6, 7, 9) report their
//! numbers and verdict without failing it. Criteria 5, 6 and 9 need Cora in
//! `$HGRL_CORA_DIR` as `edges.txt`, `features.txt` and `labels.txt`.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use common::{auc_brute, nmi_brute};
use hypergrl::checks::gradcheck_suite;
use hypergrl::config::{Config, DatasetConfig};
use hypergrl::diff::{Tape, Tensor};
use hypergrl::egab::{EgabConfig, EgabState};
use hypergrl::encoder::Backbone;
use hypergrl::eval::{auc, kmeans, linear_probe, nmi, split_nodes, write_report, KMeansConfig, ProbeConfig};
use hypergrl::graph::{build_adjacency, generate_sbm, load_graph, DegreeVector, GraphDataset, SbmSpec};
use hypergrl::io::{read_history, write_history};
use hypergrl::objective::{
    entropy_proxy, mean_operator, neighbor_mean, sigmoid, uniformity_loss, Objective, ObjectiveConfig,
};
use hypergrl::parallel::with_threads;
use hypergrl::pipeline::{link_task, node_tasks};
use hypergrl::trainer::{embed, replay_alpha, train, TrainConfig, TrainResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Blocked,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn blocked(detail: &str) -> Outcome {
    Outcome {
        verdict: Verdict::Blocked,
        detail: detail.to_string(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let reports = gradcheck_suite(0).expect("gradcheck suite runs");
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    verdict(
        failed.is_empty() && secs < 30.0,
        format!("{} checks, worst rel err {worst:.2e}, failed {failed:?}, {secs:.2}s", reports.len()),
    )
}

fn criterion_2() -> Outcome {
    let mut bad = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            bad.push(name.to_string());
        }
    };

    let path = build_adjacency(3, [(0, 1), (1, 2)]).unwrap().0;
    let z = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
    let mu = |k: usize, z: &Tensor<f64>, adj| {
        let mut t = Tape::new();
        let zv = t.constant(z.clone()).unwrap();
        let tg = neighbor_mean(&mut t, zv, &mean_operator::<f64>(adj, false), k, 1e-12).unwrap();
        t.value(tg.mu).clone()
    };
    check("neighbor_mean k=1", mu(1, &z, &path).data() == [0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    check("neighbor_mean k=2", mu(2, &z, &path).row(1) == [0.0, 1.0]);
    let star = build_adjacency(4, [(0, 1), (0, 2), (0, 3)]).unwrap().0;
    let v = [0.6, 0.8];
    let m = mu(1, &Tensor::from_rows(&[[1.0, 0.0], v, v, v]).unwrap(), &star);
    check("neighbor_mean fixed point", close(m.get(0, 0), 0.6, 1e-15) && close(m.get(0, 1), 0.8, 1e-15));

    let align = |adj: &hypergrl::graph::Csr, z: Tensor<f64>| {
        let obj = Objective::<f64>::new(adj, &DegreeVector::of(adj), ObjectiveConfig::default()).unwrap();
        let mut t = Tape::new();
        let zv = t.constant(z).unwrap();
        obj.evaluate(&mut t, zv, 1.0).unwrap().1.align
    };
    let edge = build_adjacency(2, [(0, 1)]).unwrap().0;
    let a = align(&edge, Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap());
    check("alignment single edge", close(a, sigmoid(1.0).powi(5), 1e-12) && close(a, 0.2089, 1e-4));
    check("alignment perfect", align(&path, Tensor::from_fn(3, 2, |_, j| v[j])).abs() < 1e-12);
    check("degree-10 weight", close(sigmoid(10.0).powi(5), 0.99977, 1e-5));

    let unif = |rows: &[[f64; 2]]| {
        let mut t = Tape::new();
        let zv = t.constant(Tensor::from_rows(rows).unwrap()).unwrap();
        let u = uniformity_loss(&mut t, zv).unwrap();
        t.scalar(u)
    };
    check("uniformity antipodal", unif(&[[1.0, 0.0], [-1.0, 0.0]]) == 0.0);
    check("uniformity collapsed", unif(&[[1.0, 0.0]; 3]) == 1.0 && close(unif(&[v, v, v]), 1.0, 1e-12));
    check("uniformity basis", unif(&[[1.0, 0.0], [0.0, 1.0]]) == 0.5);

    check("entropy c=1", close(entropy_proxy(1.0, 1e-6), -(1.0 + 1e-6f64).ln(), 0.0));
    check("entropy c=1e-6", close(entropy_proxy(1e-6, 1e-6), 13.12, 5e-3));
    check("entropy monotone", entropy_proxy(0.1, 1e-6) > entropy_proxy(0.2, 1e-6));

    let state = |lo, hi| EgabState::new(&EgabConfig { alpha_min: lo, alpha_max: hi, ..EgabConfig::default() }, 64).unwrap();
    check("target at H_target", state(0.0, 2.0).target_alpha(1.5).unwrap() == 1.0);
    check("target h=0", close(state(0.0, 1.0).target_alpha(0.0).unwrap(), sigmoid(5.0), 1e-15));
    check("target limit", state(0.0, 2.0).target_alpha(1e6).unwrap() < 1e-12);

    let mut s = state(0.0, 2.0);
    s.alpha = 1.0;
    s.ema_update(0.0);
    check("ema step", close(s.alpha, 0.9, 1e-15));
    s.ema_update(0.9);
    check("ema fixed point", close(s.alpha, 0.9, 1e-15));
    s.alpha = 1.7;
    let geometric = (1..=50).all(|t| {
        s.ema_update(0.3);
        close(s.alpha - 0.3, 0.9f64.powi(t) * 1.4, 1e-12)
    });
    check("ema geometric", geometric);

    verdict(bad.is_empty(), format!("failed {bad:?}"))
}

fn collapse_sbm() -> GraphDataset {
    generate_sbm(&SbmSpec {
        block_sizes: vec![100, 100, 100],
        p_in: 0.1,
        p_out: 0.01,
        feature_noise: 2.0,
        seed: 0,
    })
    .unwrap()
}

fn collapse_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 300,
        dim: 64,
        seed,
        ..TrainConfig::default()
    }
}

fn probe_accuracy(g: &GraphDataset, r: &TrainResult) -> f64 {
    let z = embed(g, &r.checkpoint, 1e-12).unwrap();
    let labels = g.labels().unwrap();
    let split = split_nodes(labels, [0.1, 0.1, 0.8], 0).unwrap();
    linear_probe(&z, labels, &split, &ProbeConfig::default()).unwrap().test_accuracy
}

fn criterion_3(g: &GraphDataset, full: &TrainResult) -> Outcome {
    let align_only = TrainConfig {
        egab: EgabConfig {
            enabled: false,
            alpha0: 0.0,
            ..EgabConfig::default()
        },
        ..collapse_config(0)
    };
    let ao = train(g, &align_only).unwrap();
    let c_ao = ao.history.last().unwrap().collapse;
    let c_full = full.history.last().unwrap().collapse;
    let bound = (-1.5f64).exp() + 0.05;
    let (acc_full, acc_ao) = (probe_accuracy(g, full), probe_accuracy(g, &ao));
    let (a, b, c) = (c_ao >= 0.9, c_full <= bound, acc_full - acc_ao >= 0.10);
    verdict(
        a && b && c,
        format!(
            "(a) align-only C={c_ao:.3} {} (b) full C={c_full:.3} {} (c) probe full {acc_full:.3} vs align-only {acc_ao:.3} {}",
            pf(a),
            pf(b),
            pf(c)
        ),
    )
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn criterion_4(full: &TrainResult, cfg: &TrainConfig) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    write_history(&path, &full.history).unwrap();
    let history = read_history(&path).unwrap();
    let replay = replay_alpha(&history, &cfg.egab, cfg.dim).unwrap();
    let exact = history.records.iter().zip(&replay).all(|(r, a)| r.alpha == *a);

    let e = &cfg.egab;
    let damping = e.gamma * (e.alpha_max - e.alpha_min);
    let h_target = e.h_target.resolve(cfg.dim);
    let (mut steps, mut violations) = (0, 0);
    for w in history.records.windows(2) {
        if h_target - w[0].h_proxy > damping {
            steps += 1;
            if w[1].alpha <= w[0].alpha {
                violations += 1;
            }
        }
    }
    verdict(
        exact && violations == 0,
        format!(
            "replay exact over {} epochs: {exact}; {steps} steps with H_proxy below target by > {damping}, {violations} without an increase",
            replay.len()
        ),
    )
}

fn criterion_7(g: &GraphDataset) -> Outcome {
    let labels = g.labels().unwrap();
    let mean_nmi = |k: usize| {
        (0..5u64)
            .map(|seed| {
                let r = train(g, &TrainConfig { k, ..collapse_config(seed) }).unwrap();
                let z = embed(g, &r.checkpoint, 1e-12).unwrap();
                let km = kmeans(&z, 3, &KMeansConfig::default(), seed).unwrap();
                nmi(&km.assignments, labels).unwrap()
            })
            .sum::<f64>()
            / 5.0
    };
    let (n1, n2) = (mean_nmi(1), mean_nmi(2));
    verdict(n2 >= n1 - 0.02, format!("NMI k=1 {n1:.3}, k=2 {n2:.3} (mean over 5 seeds)"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_nmi: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.gen_range(2..120);
        let (ka, kb) = (rng.gen_range(1..8), rng.gen_range(1..8));
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kb)).collect();
        worst_nmi = worst_nmi.max((nmi(&a, &b).unwrap() - nmi_brute(&a, &b)).abs());
    }
    let mut worst_auc: f64 = 0.0;
    let mut done = 0;
    while done < 500 {
        let n = rng.gen_range(2..150);
        let levels = rng.gen_range(2..50);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        worst_auc = worst_auc.max((auc(&scores, &labels).unwrap() - auc_brute(&scores, &labels)).abs());
        done += 1;
    }
    let mut increases = 0;
    let cfg = KMeansConfig { restarts: 1, ..KMeansConfig::default() };
    for inst in 0..100u64 {
        let n = rng.gen_range(10..200);
        let d = rng.gen_range(1..8);
        let x = Tensor::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        let k = rng.gen_range(2..=n.min(10));
        let r = kmeans(&x, k, &cfg, inst).unwrap();
        increases += r.inertia_trace.windows(2).filter(|w| w[1] > w[0]).count();
    }
    verdict(
        worst_nmi <= 1e-12 && worst_auc <= 1e-12 && increases == 0,
        format!("max |nmi - brute| {worst_nmi:.1e}, max |auc - brute| {worst_auc:.1e}, inertia increases over 100 runs: {increases}"),
    )
}

fn criterion_10() -> Outcome {
    let cfg = Config {
        dataset: DatasetConfig {
            sbm: Some(SbmSpec {
                block_sizes: vec![40, 40, 40],
                p_in: 0.15,
                p_out: 0.01,
                feature_noise: 1.0,
                seed: 3,
            }),
            ..DatasetConfig::default()
        },
        train: TrainConfig {
            epochs: 60,
            dim: 32,
            ..TrainConfig::default()
        },
        seeds: vec![0, 1],
        ..Config::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let reports = with_threads(1, || hypergrl::pipeline::run_pipeline(&cfg)).unwrap();
        write_report(&reports, &path).unwrap();
        std::fs::read(path).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    verdict(a == b, format!("{} byte metrics file, identical: {}", a.len(), a == b))
}

fn cora() -> Option<GraphDataset> {
    let dir = PathBuf::from(std::env::var_os("HGRL_CORA_DIR")?);
    let (g, _) = load_graph(&dir.join("edges.txt"), &dir.join("features.txt"), Some(&dir.join("labels.txt")))
        .expect("Cora files in HGRL_CORA_DIR load");
    Some(g)
}

fn cora_config() -> Config {
    Config {
        train: TrainConfig {
            epochs: 600,
            dim: 256,
            backbone: Backbone::Gcn,
            ..TrainConfig::default()
        },
        ..Config::default()
    }
}

fn cora_probe(g: &GraphDataset, cfg: &Config) -> f64 {
    (0..5u64).map(|s| node_tasks(g, cfg, s).unwrap().probe.test_accuracy).sum::<f64>() / 5.0
}

const NO_CORA: &str = "Cora not available; set HGRL_CORA_DIR to a directory with edges.txt, features.txt, labels.txt";

fn main() {
    let threads = hypergrl::parallel::threads_from_env();
    let mut gating_failures = 0;
    let mut report = |id: &str, gating: bool, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Blocked => "BLOCKED",
        };
        println!("criterion {id}: {tag} [{:.1}s] {}", t.elapsed().as_secs_f64(), o.detail);
        if gating && o.verdict == Verdict::Fail {
            gating_failures += 1;
        }
    };

    let g = collapse_sbm();
    let full_cfg = collapse_config(0);
    let full = with_threads(threads, || train(&g, &full_cfg)).unwrap();
    let cora = cora();

    report("1", true, &mut criterion_1);
    report("2", true, &mut criterion_2);
    report("3", false, &mut || with_threads(threads, || criterion_3(&g, &full)));
    report("4", true, &mut || criterion_4(&full, &full_cfg));
    report("5", false, &mut || match &cora {
        None => blocked(NO_CORA),
        Some(c) => {
            let acc = with_threads(threads, || cora_probe(c, &cora_config()));
            verdict(acc >= 0.78, format!("mean probe accuracy {acc:.4} over 5 seeds"))
        }
    });
    report("6", false, &mut || match &cora {
        None => blocked(NO_CORA),
        Some(c) => {
            let full = cora_config();
            let mut ablated = cora_config();
            ablated.train.egab = EgabConfig { enabled: false, alpha0: 0.0, ..EgabConfig::default() };
            let (a, b) = with_threads(threads, || (cora_probe(c, &full), cora_probe(c, &ablated)));
            verdict(a - b >= 0.05, format!("full {a:.4} vs without uniformity {b:.4}"))
        }
    });
    report("7", false, &mut || with_threads(threads, || criterion_7(&g)));
    report("8", true, &mut criterion_8);
    report("9", false, &mut || match &cora {
        None => blocked(NO_CORA),
        Some(c) => {
            let cfg = cora_config();
            let auc = with_threads(threads, || {
                (0..3u64).map(|s| link_task(c, &cfg, s).unwrap().test_auc).sum::<f64>() / 3.0
            });
            verdict(auc >= 0.90, format!("mean test AUC {auc:.4} over 3 seeds"))
        }
    });
    report("10", true, &mut criterion_10);

    if gating_failures > 0 {
        eprintln!("{gating_failures} correctness criteria failed");
        std::process::exit(1);
    }
}

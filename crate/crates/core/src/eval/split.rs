use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Csr, GraphDataset};
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

/// Train/validation/test node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeSplit {
    /// Check disjointness and range against `n` nodes.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Validation(format!("split index {i} out of range for {n} nodes")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("node {i} appears in two partitions")));
            }
        }
        Ok(())
    }
}

fn check_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || f.iter().sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::Argument(format!("split fractions {f:?} must be in [0,1] and sum to at most 1")));
    }
    Ok(())
}

fn sums_to_one(f: [f64; 3]) -> bool {
    (f.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

/// Stratified random split; each class contributes `round(f * n_c)` nodes
/// to each partition, with at least one training node per class.
pub fn split_nodes(labels: &[usize], fractions: [f64; 3], seed: u64) -> Result<NodeSplit> {
    check_fractions(fractions)?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = rng_for(seed, Stream::NodeSplit, 0);
    let mut split = NodeSplit::default();
    for (c, mut members) in by_class.into_iter().enumerate() {
        let n_c = members.len();
        let n_train = ((fractions[0] * n_c as f64).round() as usize).max(1);
        let n_val = (fractions[1] * n_c as f64).round() as usize;
        if n_c < n_train + n_val {
            return Err(Error::Argument(format!(
                "class {c} has {n_c} members but needs {n_train} train and {n_val} validation nodes"
            )));
        }
        let rest = n_c - n_train - n_val;
        let n_test = if sums_to_one(fractions) {
            rest
        } else {
            ((fractions[2] * n_c as f64).round() as usize).min(rest)
        };
        members.shuffle(&mut rng);
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..n_train + n_val + n_test]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Positive and sampled negative edges per partition, plus the graph used
/// for message passing (training positives only).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub seed: u64,
    pub message_graph: Csr,
}

impl EdgeSplit {
    pub fn partitions(&self) -> [&Vec<(usize, usize)>; 6] {
        [
            &self.train,
            &self.val,
            &self.test,
            &self.train_neg,
            &self.val_neg,
            &self.test_neg,
        ]
    }

    /// Rebuild from stored partitions (see [`crate::io::read_edge_partitions`]).
    pub fn from_partitions(n: usize, parts: [Vec<(usize, usize)>; 6], seed: u64) -> Result<Self> {
        let [train, val, test, train_neg, val_neg, test_neg] = parts;
        let message_graph = Csr::from_undirected(n, train.iter().copied())?;
        Ok(EdgeSplit {
            train,
            val,
            test,
            train_neg,
            val_neg,
            test_neg,
            seed,
            message_graph,
        })
    }

    /// No held-out positive may appear in the message-passing graph.
    pub fn assert_no_leakage(&self) -> Result<()> {
        for &(u, v) in self.val.iter().chain(&self.test) {
            if self.message_graph.has_edge(u, v) {
                return Err(Error::Validation(format!("held-out edge ({u}, {v}) leaks into the message graph")));
            }
        }
        Ok(())
    }
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Random edge partition with count-matched negatives drawn from the
/// non-edges of the full graph.
pub fn split_edges(g: &GraphDataset, fractions: [f64; 3], seed: u64) -> Result<EdgeSplit> {
    check_fractions(fractions)?;
    let mut edges: Vec<(usize, usize)> = g.adjacency().edges().collect();
    let m = edges.len();
    if m < 20 {
        return Err(Error::Argument(format!("edge split needs at least 20 edges, graph has {m}")));
    }
    let n_val = (fractions[1] * m as f64).round() as usize;
    let n_test = (fractions[2] * m as f64).round() as usize;
    let n_train = if sums_to_one(fractions) {
        m.saturating_sub(n_val + n_test)
    } else {
        (fractions[0] * m as f64).round() as usize
    };
    if n_train == 0 || n_val == 0 || n_test == 0 || n_train + n_val + n_test > m {
        return Err(Error::Argument(format!(
            "{m} edges cannot be split into {n_train}/{n_val}/{n_test} nonempty partitions"
        )));
    }
    let mut rng = rng_for(seed, Stream::EdgeSplit, 0);
    edges.shuffle(&mut rng);
    let test: Vec<_> = edges[..n_test].to_vec();
    let val: Vec<_> = edges[n_test..n_test + n_val].to_vec();
    let train: Vec<_> = edges[n_test + n_val..n_test + n_val + n_train].to_vec();

    let n = g.num_nodes();
    let needed = n_train + n_val + n_test;
    let available = n * n.saturating_sub(1) / 2 - m;
    if available < needed {
        return Err(Error::Argument(format!(
            "only {available} non-edges available for {needed} negatives"
        )));
    }
    let adj = g.adjacency();
    let mut chosen = HashSet::with_capacity(needed);
    let mut negatives = Vec::with_capacity(needed);
    if available < 4 * needed {
        // dense graph: enumerate non-edges and sample without replacement
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .filter(|&(u, v)| !adj.has_edge(u, v))
            .collect();
        pool.shuffle(&mut rng);
        negatives.extend_from_slice(&pool[..needed]);
    } else {
        while negatives.len() < needed {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v || adj.has_edge(u, v) {
                continue;
            }
            let e = canonical(u, v);
            if chosen.insert(e) {
                negatives.push(e);
            }
        }
    }
    let test_neg = negatives[..n_test].to_vec();
    let val_neg = negatives[n_test..n_test + n_val].to_vec();
    let train_neg = negatives[n_test + n_val..].to_vec();
    let split = EdgeSplit {
        message_graph: Csr::from_undirected(n, train.iter().copied())?,
        train,
        val,
        test,
        train_neg,
        val_neg,
        test_neg,
        seed,
    };
    split.assert_no_leakage()?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_two_class_counts() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let s = split_nodes(&labels, [0.1, 0.1, 0.8], 4).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 10, 80));
        assert_eq!(s.train.iter().filter(|&&i| labels[i] == 0).count(), 5);
        s.validate(100).unwrap();
        assert_eq!(s, split_nodes(&labels, [0.1, 0.1, 0.8], 4).unwrap());
    }

    #[test]
    fn missing_class_is_an_error() {
        // class 1 never occurs
        assert!(split_nodes(&[0, 0, 2, 2], [0.5, 0.0, 0.5], 0).is_err());
        assert!(split_nodes(&[0, 1], [0.7, 0.7, 0.0], 0).is_err());
    }

    #[test]
    fn validate_catches_overlap() {
        let s = NodeSplit { train: vec![0, 1], val: vec![1], test: vec![] };
        assert!(s.validate(3).is_err());
    }
}

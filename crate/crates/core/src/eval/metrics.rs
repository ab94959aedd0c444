use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normalization of mutual information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmiNorm {
    #[default]
    Arithmetic,
    Geometric,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn relabel(a: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = a
        .iter()
        .map(|x| {
            let next = ids.len();
            *ids.entry(*x).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

/// Normalized mutual information with natural logarithms.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    nmi_with(a, b, NmiNorm::Arithmetic)
}

pub fn nmi_with(a: &[usize], b: &[usize], norm: NmiNorm) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("nmi: {} vs {} labels", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Argument("nmi: empty labelings".into()));
    }
    let n = a.len() as f64;
    let (a, ka) = relabel(a);
    let (b, kb) = relabel(b);
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(&b) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let ha = entropy(ca.iter().copied(), n);
    let hb = entropy(cb.iter().copied(), n);
    if ha == 0.0 || hb == 0.0 {
        // Both constant: identical partitions. Otherwise one carries no information.
        return Ok(if ka == 1 && kb == 1 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            mi += pxy * (pxy / ((ca[x] as f64 / n) * (cb[y] as f64 / n))).ln();
        }
    }
    let denom = match norm {
        NmiNorm::Arithmetic => 0.5 * (ha + hb),
        NmiNorm::Geometric => (ha * hb).sqrt(),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Area under the ROC curve via the rank-sum statistic, with midranks for ties.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("auc: {} scores for {} labels", scores.len(), labels.len())));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Argument("auc needs both positive and negative examples".into()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("auc: score {s}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based: positions start..end share rank (start + 1 + end) / 2
        let midrank = (start + 1 + end) as f64 / 2.0;
        rank_sum_pos += midrank * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

//! Brute-force reference implementations shared by the metric tests.

#![allow(dead_code)]

/// NMI from per-sample counts, O(n^2): each sample's class size and joint size
/// are counted by scanning all samples.
pub fn nmi_brute(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let nf = n as f64;
    let (mut ha, mut hb, mut mi) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let ca = (0..n).filter(|&j| a[j] == a[i]).count() as f64;
        let cb = (0..n).filter(|&j| b[j] == b[i]).count() as f64;
        let cab = (0..n).filter(|&j| a[j] == a[i] && b[j] == b[i]).count() as f64;
        ha -= (ca / nf).ln() / nf;
        hb -= (cb / nf).ln() / nf;
        mi += (nf * cab / (ca * cb)).ln() / nf;
    }
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    mi / (0.5 * (ha + hb))
}

/// Fraction of positive/negative pairs ranked correctly, ties counting half.
pub fn auc_brute(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Scalar, Tensor};
use crate::parallel::map_ordered;
use crate::rng::{rng_for, Stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Tensor<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(x: &Tensor<f64>, k: usize, rng: &mut impl Rng) -> Tensor<f64> {
    let n = x.rows();
    let mut centroids = Tensor::zeros(k, x.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            // every point coincides with a centroid already
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

/// Nearest centroid per point (lowest index on ties) and the total squared distance.
fn assign(x: &Tensor<f64>, centroids: &Tensor<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = (0..x.rows())
        .map(|i| {
            let (best, d) = (0..centroids.rows())
                .map(|c| (c, sq_dist(x.row(i), centroids.row(c))))
                .fold((0, f64::INFINITY), |b, cur| if cur.1 < b.1 { cur } else { b });
            inertia += d;
            best
        })
        .collect();
    (labels, inertia)
}

fn lloyd(x: &Tensor<f64>, k: usize, config: &KMeansConfig, rng: &mut impl Rng) -> KMeansResult {
    let mut centroids = plus_plus_init(x, k, rng);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (labels, inertia) = assign(x, &centroids);
        trace.push(inertia);
        iterations += 1;
        let mut sums = Tensor::<f64>::zeros(k, x.cols());
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for (c, &count) in counts.iter().enumerate() {
            // empty clusters keep their centroid
            if count == 0 {
                continue;
            }
            let inv = 1.0 / count as f64;
            for v in sums.row_mut(c) {
                *v *= inv;
            }
            shift = shift.max(sq_dist(sums.row(c), centroids.row(c)).sqrt());
            centroids.row_mut(c).copy_from_slice(sums.row(c));
        }
        if shift < config.tol || iterations >= config.max_iter {
            let (assignments, inertia) = assign(x, &centroids);
            trace.push(inertia);
            return KMeansResult {
                assignments,
                centroids,
                inertia,
                inertia_trace: trace,
                iterations,
            };
        }
    }
}

/// k-means++ seeded Lloyd iterations, best of `config.restarts` by inertia.
pub fn kmeans<T: Scalar>(z: &Tensor<T>, num_clusters: usize, config: &KMeansConfig, seed: u64) -> Result<KMeansResult> {
    if num_clusters < 2 && z.rows() >= 2 {
        return Err(Error::Argument(format!("kmeans needs at least 2 clusters, got {num_clusters}")));
    }
    if num_clusters == 0 || num_clusters > z.rows() {
        return Err(Error::Argument(format!(
            "kmeans: {num_clusters} clusters for {} points",
            z.rows()
        )));
    }
    if config.restarts == 0 || config.max_iter == 0 {
        return Err(Error::Config("kmeans restarts and max_iter must be >= 1".into()));
    }
    let x = z.cast::<f64>();
    x.ensure_finite("kmeans input")?;
    let restarts: Vec<u64> = (0..config.restarts as u64).collect();
    let runs = map_ordered(&restarts, |&r| {
        let mut rng = rng_for(seed, Stream::KMeans, r);
        lloyd(&x, num_clusters, config, &mut rng)
    });
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_point_its_own_cluster() {
        let x = Tensor::from_fn(5, 2, |i, j| (i * 3 + j) as f64);
        let r = kmeans(&x, 5, &KMeansConfig::default(), 0).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn too_many_clusters() {
        let x = Tensor::<f64>::zeros(3, 2);
        assert!(kmeans(&x, 4, &KMeansConfig::default(), 0).is_err());
        assert!(kmeans(&x, 1, &KMeansConfig::default(), 0).is_err());
    }
}

//! Hard assignments, the k-means baseline, misallocation scoring and
//! per-cluster Granger-causality reports.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::RegressionDataset;
use crate::error::{Error, Result};
use crate::mppcca::Responsibilities;
use crate::pcca::{granger_from_blocks, Ridge};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for K = {k}")));
        }
        Ok(Self { labels, k })
    }

    /// Uses `max(label) + 1` as the cluster count.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sample indices per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (n, &l) in self.labels.iter().enumerate() {
            out[l].push(n);
        }
        out
    }
}

/// `argmax_k r_nk`, ties to the lowest index.
pub fn hard_assign(resp: &Responsibilities) -> ClusterAssignment {
    let labels = resp
        .matrix()
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    ClusterAssignment { labels, k: resp.k() }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    /// `k × d`.
    pub centroids: DMatrix<f64>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

pub const KMEANS_MAX_ITERS: usize = 300;

/// Lloyd's algorithm with k-means++ seeding, deterministic per `seed`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<ClusterAssignment> {
    kmeans_detailed(points, k, seed).map(|r| r.assignment)
}

pub fn kmeans_detailed(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::InsufficientSamples {
            needed: k.saturating_sub(1),
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..KMEANS_MAX_ITERS {
        let (new_labels, dists) = assign(points, &centroids);
        let changed = new_labels != labels;
        labels = new_labels;
        history.push(dists.iter().sum());
        if !changed {
            converged = true;
            break;
        }
        update_centroids(points, &labels, &dists, &mut centroids);
    }
    Ok(KMeansResult {
        assignment: ClusterAssignment { labels, k },
        centroids,
        inertia_history: history,
        converged,
    })
}

fn sq_dist(points: &DMatrix<f64>, n: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|j| (points[(n, j)] - centroids[(c, j)]).powi(2))
        .sum()
}

fn plus_plus_seeds(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&nearest) {
            Ok(w) => w.sample(rng),
            // All remaining mass is zero: duplicates only.
            Err(_) => rng.random_range(0..n),
        };
        centroids.set_row(c, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..points.nrows())
        .map(|i| {
            (0..centroids.nrows())
                .map(|c| (c, sq_dist(points, i, centroids, c)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        })
        .unzip()
}

/// Means of assigned points; an empty cluster takes the point farthest from
/// its own centroid.
fn update_centroids(points: &DMatrix<f64>, labels: &[usize], dists: &[f64], centroids: &mut DMatrix<f64>) {
    let k = centroids.nrows();
    let mut sums = DMatrix::zeros(k, points.ncols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        let mut row = sums.row_mut(l);
        row += points.row(i);
    }
    let mut taken = vec![false; points.nrows()];
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            centroids.set_row(c, &(sums.row(c) / count as f64));
        } else {
            let far = (0..points.nrows())
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("n >= k");
            taken[far] = true;
            centroids.set_row(c, &points.row(far));
        }
    }
}

/// Fraction of samples whose true label is not the majority true label of
/// their estimated cluster.
pub fn misallocation_rate(est: &ClusterAssignment, truth: &ClusterAssignment) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: est.len(),
            right: truth.len(),
        });
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&e, &t) in est.labels.iter().zip(&truth.labels) {
        *table.entry(e).or_default().entry(t).or_default() += 1;
    }
    let minority: usize = table
        .values()
        .map(|counts| counts.values().sum::<usize>() - counts.values().max().copied().unwrap_or(0))
        .sum();
    Ok(minority as f64 / est.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGc {
    pub cluster_id: usize,
    pub n_samples: usize,
    pub rho1: Option<f64>,
    pub gc_index: Option<f64>,
    /// Why no estimate is available, when it is not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcReport {
    pub per_cluster: Vec<ClusterGc>,
    pub whole_series_rho1: f64,
    pub whole_series_gc: f64,
}

impl GcReport {
    /// Largest available per-cluster index.
    pub fn max_gc(&self) -> Option<f64> {
        self.per_cluster.iter().filter_map(|c| c.gc_index).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cluster_id", "n_samples", "rho1", "gc_index"])?;
        let fmt = |v: Option<f64>| v.map(crate::io::format_f64).unwrap_or_default();
        for c in &self.per_cluster {
            w.write_record([
                c.cluster_id.to_string(),
                c.n_samples.to_string(),
                fmt(c.rho1),
                fmt(c.gc_index),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Granger-causality estimate on every cluster's samples and on all samples.
///
/// Clusters too small for an estimate stay in the report with a flag.
pub fn clusterwise_gc(data: &RegressionDataset, assignment: &ClusterAssignment, ridge: Ridge) -> Result<GcReport> {
    if assignment.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: assignment.len(),
            right: data.len(),
        });
    }
    let whole = granger_from_blocks(data, ridge)?;
    let per_cluster = assignment
        .members()
        .into_iter()
        .enumerate()
        .map(|(cluster_id, rows)| {
            let n_samples = rows.len();
            let estimate = if rows.is_empty() {
                Err(Error::InsufficientSamples {
                    needed: data.dx() + data.d1() + data.d2(),
                    got: 0,
                })
            } else {
                data.subset(&rows).and_then(|sub| granger_from_blocks(&sub, ridge))
            };
            match estimate {
                Ok(e) => Ok(ClusterGc {
                    cluster_id,
                    n_samples,
                    rho1: Some(e.rho1),
                    gc_index: Some(e.gc_index),
                    flag: None,
                }),
                Err(e @ (Error::InsufficientSamples { .. } | Error::Conditioning { .. } | Error::Domain(_))) => {
                    Ok(ClusterGc {
                        cluster_id,
                        n_samples,
                        rho1: None,
                        gc_index: None,
                        flag: Some(e.to_string()),
                    })
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GcReport {
        per_cluster,
        whole_series_rho1: whole.rho1,
        whole_series_gc: whole.gc_index,
    })
}

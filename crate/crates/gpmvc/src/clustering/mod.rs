//! Deep-embedded clustering head: Student's-t soft assignments around
//! learnable centroids, the sharpened target distribution, the KL
//! self-training loss with its analytic gradients, and seeded k-means for
//! centroid initialization.

pub mod metrics;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Degrees of freedom of the Student's-t kernel.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Soft cluster frequencies below this trigger the empty-cluster recovery.
pub const EMPTY_CLUSTER_EPS: f64 = 1e-12;

/// Centroids plus the soft and target assignment matrices.
#[derive(Debug, Clone)]
pub struct ClusterState {
    /// `k x m` centroid matrix.
    pub centroids: Array2<f64>,
    pub alpha: f64,
    /// `N x k` soft assignment, rows sum to 1.
    pub q: Array2<f64>,
    /// `N x k` target distribution, rows sum to 1. Treated as a constant
    /// during training (no gradient flows into it).
    pub p: Array2<f64>,
}

/// Predicted labels with their evaluation metrics and run provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
    pub ratio: f64,
    pub seed: u64,
    pub mode: String,
}

/// Student's-t soft assignment (row-stochastic `N x k`):
/// `q_ij = (1 + |z_i - mu_j|^2 / alpha)^(-(alpha+1)/2)`, row-normalized.
pub fn soft_assign(z: ArrayView2<f64>, centroids: &Array2<f64>, alpha: f64) -> Result<Array2<f64>> {
    let k = centroids.nrows();
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "soft assignment needs k >= 2 clusters, got {k}"
        )));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!("alpha must be > 0, got {alpha}")));
    }
    if z.ncols() != centroids.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "latent width {} != centroid width {}",
            z.ncols(),
            centroids.ncols()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) || centroids.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("soft_assign input"));
    }
    let exponent = -(alpha + 1.0) / 2.0;
    let mut q = Array2::zeros((z.nrows(), k));
    for (i, zi) in z.rows().into_iter().enumerate() {
        let mut sum = 0.0;
        for (j, mu) in centroids.rows().into_iter().enumerate() {
            let d2: f64 = zi
                .iter()
                .zip(mu.iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            let kernel = (1.0 + d2 / alpha).powf(exponent);
            q[[i, j]] = kernel;
            sum += kernel;
        }
        q.row_mut(i).mapv_inplace(|v| v / sum);
    }
    Ok(q)
}

/// Sharpened target distribution:
/// `p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j')` with `f_j = sum_i q_ij`.
pub fn target_distribution(q: &Array2<f64>) -> Result<Array2<f64>> {
    let freq = q.sum_axis(Axis(0));
    if let Some(j) = freq.iter().position(|&f| f <= 0.0) {
        return Err(Error::EmptyCluster(j));
    }
    let mut p = Array2::zeros(q.raw_dim());
    for (i, qi) in q.rows().into_iter().enumerate() {
        let mut sum = 0.0;
        for (j, &qij) in qi.iter().enumerate() {
            let w = qij * qij / freq[j];
            p[[i, j]] = w;
            sum += w;
        }
        p.row_mut(i).mapv_inplace(|v| v / sum);
    }
    Ok(p)
}

/// `KL(P || Q) = sum_ij p_ij ln(p_ij / q_ij)` with `0 ln(0/q) = 0`.
pub fn kl_clustering_loss(p: &Array2<f64>, q: &Array2<f64>) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::ShapeMismatch(format!(
            "P is {:?}, Q is {:?}",
            p.dim(),
            q.dim()
        )));
    }
    let mut total = 0.0;
    for (&pij, &qij) in p.iter().zip(q.iter()) {
        if pij > 0.0 {
            if qij <= 0.0 {
                return Err(Error::Invalid(
                    "KL undefined: p > 0 where q = 0".into(),
                ));
            }
            total += pij * (pij / qij).ln();
        }
    }
    Ok(total)
}

/// Analytic gradients of `scale * KL(P || Q(Z, mu))` w.r.t. `z` and the
/// centroids, with `P` frozen:
///
/// `dL/dz_i = scale * (alpha+1)/alpha * sum_j (1 + d_ij/alpha)^-1 (p_ij - q_ij)(z_i - mu_j)`
///
/// and the negated sum over samples for `dL/dmu_j`.
pub fn kl_grads(
    z: ArrayView2<f64>,
    centroids: &Array2<f64>,
    alpha: f64,
    p: &Array2<f64>,
    scale: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let q = soft_assign(z, centroids, alpha)?;
    if p.dim() != q.dim() {
        return Err(Error::ShapeMismatch(format!(
            "P is {:?}, Q is {:?}",
            p.dim(),
            q.dim()
        )));
    }
    let coeff = scale * (alpha + 1.0) / alpha;
    let mut dz = Array2::zeros(z.raw_dim());
    let mut dmu = Array2::zeros(centroids.raw_dim());
    for i in 0..z.nrows() {
        for j in 0..centroids.nrows() {
            let mut d2 = 0.0;
            for c in 0..z.ncols() {
                let diff = z[[i, c]] - centroids[[j, c]];
                d2 += diff * diff;
            }
            let u = 1.0 / (1.0 + d2 / alpha);
            let w = coeff * u * (p[[i, j]] - q[[i, j]]);
            for c in 0..z.ncols() {
                let diff = z[[i, c]] - centroids[[j, c]];
                dz[[i, c]] += w * diff;
                dmu[[j, c]] -= w * diff;
            }
        }
    }
    Ok((dz, dmu))
}

/// Hard labels from the soft assignment; ties break toward the smaller index.
pub fn assign_clusters(q: &Array2<f64>) -> Vec<usize> {
    q.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_val = row[0];
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > best_val {
                    best = j;
                    best_val = v;
                }
            }
            best
        })
        .collect()
}

/// Restarts inside [`init_centroids`]; the lowest-inertia run wins.
const KMEANS_RESTARTS: usize = 10;

/// Seeded k-means: k-means++ initialization, Lloyd iterations capped at 300
/// with tolerance 1e-4 on the summed squared centroid movement, best of
/// [`KMEANS_RESTARTS`] restarts by within-cluster inertia.
pub fn init_centroids(z: ArrayView2<f64>, k: usize, seed: u64) -> Result<Array2<f64>> {
    let n = z.nrows();
    if n < k {
        return Err(Error::Invalid(format!(
            "k-means needs at least k={k} samples, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut best: Option<(f64, Array2<f64>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centroids = kmeans_plus_plus(z, k, &mut rng);
        lloyd_refine(z, &mut centroids, 300, 1e-4);
        let cost = inertia(z, &centroids);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, centroids));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn kmeans_plus_plus(z: ArrayView2<f64>, k: usize, rng: &mut SeededRng) -> Array2<f64> {
    let n = z.nrows();
    let m = z.ncols();
    let mut centroids = Array2::zeros((k, m));
    let first = rng.index(n);
    centroids.row_mut(0).assign(&z.row(first));
    let mut dist2: Vec<f64> = z
        .rows()
        .into_iter()
        .map(|row| sq_dist(row, centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.index(n)
        };
        centroids.row_mut(c).assign(&z.row(chosen));
        for (i, row) in z.rows().into_iter().enumerate() {
            let d = sq_dist(row, centroids.row(c));
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }
    centroids
}

/// Within-cluster sum of squared distances.
fn inertia(z: ArrayView2<f64>, centroids: &Array2<f64>) -> f64 {
    z.rows()
        .into_iter()
        .map(|row| {
            centroids
                .rows()
                .into_iter()
                .map(|mu| sq_dist(row, mu))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Lloyd iterations from a warm start: reassign, recompute means, stop when
/// the summed squared centroid movement drops below `tol`. Empty clusters
/// re-seed at the point farthest from its assigned centroid. Used both by
/// [`init_centroids`] and to track representation drift between training
/// epochs.
pub fn lloyd_refine(z: ArrayView2<f64>, centroids: &mut Array2<f64>, max_iters: usize, tol: f64) {
    let n = z.nrows();
    let (k, m) = centroids.dim();
    let mut assignment = vec![0usize; n];
    for _ in 0..max_iters {
        for (i, row) in z.rows().into_iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, mu) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(row, mu);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assignment[i] = best;
        }
        let mut next = Array2::<f64>::zeros((k, m));
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            let mut row = next.row_mut(a);
            row += &z.row(i);
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed an empty cluster at the point farthest from its
                // current centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(z.row(a), centroids.row(assignment[a]));
                        let db = sq_dist(z.row(b), centroids.row(assignment[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                next.row_mut(j).assign(&z.row(far));
            } else {
                let mut row = next.row_mut(j);
                row /= counts[j] as f64;
            }
        }
        let shift: f64 = (&next - &*centroids).mapv(|d| d * d).sum();
        centroids.assign(&next);
        if shift < tol {
            break;
        }
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Excess-entropy guard used during self-training: any cluster whose soft
/// frequency collapses below [`EMPTY_CLUSTER_EPS`] is re-seeded at the sample
/// with the least confident assignment. Returns true when a reseed happened.
pub fn reseed_empty_clusters(
    z: ArrayView2<f64>,
    centroids: &mut Array2<f64>,
    q: &Array2<f64>,
) -> bool {
    let freq = q.sum_axis(Axis(0));
    let mut reseeded = false;
    for (j, &f) in freq.iter().enumerate() {
        if f < EMPTY_CLUSTER_EPS {
            let least_confident = q
                .rows()
                .into_iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let ma = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mb = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    ma.partial_cmp(&mb).unwrap()
                })
                .map(|(i, _)| i)
                .unwrap();
            centroids.row_mut(j).assign(&z.row(least_confident));
            reseeded = true;
        }
    }
    reseeded
}

//! Cluster-quality indices: silhouette, Calinski-Harabasz, Davies-Bouldin.
//!
//! All three use Euclidean distance on the same coordinates k-means ran on.
//! Conventions for the degenerate corners: a singleton cluster's silhouette
//! is 0, a point with a(i) = b(i) = 0 scores 0, zero within-cluster dispersion
//! makes CH +infinity, and coincident centroids are an error for DB.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SilhouetteScores<T: Scalar> {
    pub per_point: Vec<T>,
    pub mean: T,
}

#[derive(Debug, Clone)]
pub struct ClusterQuality<T: Scalar> {
    pub ch_index: T,
    pub db_index: T,
    pub mean_silhouette: T,
    pub per_point_silhouette: Vec<T>,
}

fn cluster_counts(assignments: &[usize]) -> Result<Vec<usize>> {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &a in assignments {
        counts[a] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Precondition("every cluster must be non-empty".into()));
    }
    Ok(counts)
}

fn euclidean<T: Scalar>(x: &Array2<T>, a: usize, b: usize) -> T {
    let mut acc = T::zero();
    for j in 0..x.ncols() {
        let d = x[(a, j)] - x[(b, j)];
        acc += d * d;
    }
    acc.sqrt()
}

fn centroids<T: Scalar>(x: &Array2<T>, assignments: &[usize], counts: &[usize]) -> Array2<T> {
    let k = counts.len();
    let mut c = Array2::zeros((k, x.ncols()));
    for (i, &a) in assignments.iter().enumerate() {
        for j in 0..x.ncols() {
            c[(a, j)] += x[(i, j)];
        }
    }
    for (ci, &count) in counts.iter().enumerate() {
        let denom = T::from_usize_c(count);
        for j in 0..x.ncols() {
            c[(ci, j)] /= denom;
        }
    }
    c
}

/// Per-point silhouette s(i) = (b - a) / max(a, b) and its mean.
pub fn silhouette<T: Scalar>(x: &Array2<T>, assignments: &[usize]) -> Result<SilhouetteScores<T>> {
    let n = x.nrows();
    if assignments.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} assignments"),
            got: format!("{}", assignments.len()),
        });
    }
    let counts = cluster_counts(assignments)?;
    let k = counts.len();
    if k < 2 {
        return Err(Error::Precondition("silhouette requires k >= 2".into()));
    }

    let mut per_point = Vec::with_capacity(n);
    for i in 0..n {
        let own = assignments[i];
        if counts[own] == 1 {
            per_point.push(T::zero());
            continue;
        }
        let mut sums = vec![T::zero(); k];
        for j in 0..n {
            if j == i {
                continue;
            }
            sums[assignments[j]] += euclidean(x, i, j);
        }
        let a = sums[own] / T::from_usize_c(counts[own] - 1);
        let mut b = T::infinity();
        for (c, &count) in counts.iter().enumerate() {
            if c == own {
                continue;
            }
            let mean = sums[c] / T::from_usize_c(count);
            if mean < b {
                b = mean;
            }
        }
        let denom = a.max(b);
        per_point.push(if denom == T::zero() {
            T::zero()
        } else {
            (b - a) / denom
        });
    }
    let mean = per_point.iter().copied().sum::<T>() / T::from_usize_c(n);
    Ok(SilhouetteScores { per_point, mean })
}

/// Tr(B)/Tr(W) · (N-k)/(k-1); +infinity when the within-dispersion is zero.
pub fn ch_index<T: Scalar>(x: &Array2<T>, assignments: &[usize]) -> Result<T> {
    let n = x.nrows();
    let counts = cluster_counts(assignments)?;
    let k = counts.len();
    if k < 2 || k >= n {
        return Err(Error::Precondition(format!(
            "CH index requires 2 <= k < n, got k={k}, n={n}"
        )));
    }
    let cents = centroids(x, assignments, &counts);
    let mut global = vec![T::zero(); x.ncols()];
    for i in 0..n {
        for j in 0..x.ncols() {
            global[j] += x[(i, j)];
        }
    }
    let n_t = T::from_usize_c(n);
    for g in global.iter_mut() {
        *g /= n_t;
    }

    let mut between = T::zero();
    for (c, &count) in counts.iter().enumerate() {
        let mut acc = T::zero();
        for j in 0..x.ncols() {
            let d = cents[(c, j)] - global[j];
            acc += d * d;
        }
        between += T::from_usize_c(count) * acc;
    }
    let mut within = T::zero();
    for (i, &a) in assignments.iter().enumerate() {
        for j in 0..x.ncols() {
            let d = x[(i, j)] - cents[(a, j)];
            within += d * d;
        }
    }
    if within == T::zero() {
        return Ok(T::infinity());
    }
    let scale = T::from_usize_c(n - k) / T::from_usize_c(k - 1);
    Ok(between / within * scale)
}

/// Mean over clusters of the worst (σ_i + σ_j) / d(c_i, c_j) ratio.
pub fn db_index<T: Scalar>(x: &Array2<T>, assignments: &[usize]) -> Result<T> {
    let counts = cluster_counts(assignments)?;
    let k = counts.len();
    if k < 2 {
        return Err(Error::Precondition("DB index requires k >= 2".into()));
    }
    let cents = centroids(x, assignments, &counts);

    let mut sigma = vec![T::zero(); k];
    for (i, &a) in assignments.iter().enumerate() {
        let mut acc = T::zero();
        for j in 0..x.ncols() {
            let d = x[(i, j)] - cents[(a, j)];
            acc += d * d;
        }
        sigma[a] += acc.sqrt();
    }
    for (s, &count) in sigma.iter_mut().zip(counts.iter()) {
        *s /= T::from_usize_c(count);
    }

    let mut total = T::zero();
    for i in 0..k {
        let mut worst = T::zero();
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut acc = T::zero();
            for col in 0..x.ncols() {
                let d = cents[(i, col)] - cents[(j, col)];
                acc += d * d;
            }
            let dist = acc.sqrt();
            if dist == T::zero() {
                return Err(Error::CoincidentCentroids { a: i.min(j), b: i.max(j) });
            }
            let ratio = (sigma[i] + sigma[j]) / dist;
            if ratio > worst {
                worst = ratio;
            }
        }
        total += worst;
    }
    Ok(total / T::from_usize_c(k))
}

/// All three indices over the same coordinates and assignments.
pub fn cluster_quality<T: Scalar>(
    x: &Array2<T>,
    assignments: &[usize],
) -> Result<ClusterQuality<T>> {
    let sil = silhouette(x, assignments)?;
    Ok(ClusterQuality {
        ch_index: ch_index(x, assignments)?,
        db_index: db_index(x, assignments)?,
        mean_silhouette: sil.mean,
        per_point_silhouette: sil.per_point,
    })
}

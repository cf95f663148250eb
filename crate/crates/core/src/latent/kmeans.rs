//! Lloyd's k-means with deterministic k-means++ seeding and elbow selection.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ClusterModel<T: Scalar> {
    pub k: usize,
    pub centroids: Array2<T>,
    pub assignments: Vec<usize>,
    pub inertia: T,
    pub seed: u64,
}

fn dist2<T: Scalar>(x: &Array2<T>, row: usize, c: &Array2<T>, centroid: usize) -> T {
    let mut acc = T::zero();
    for j in 0..x.ncols() {
        let d = x[(row, j)] - c[(centroid, j)];
        acc += d * d;
    }
    acc
}

/// Deterministic k-means++ seeding: first centroid uniform, then each next
/// point weighted by its squared distance to the nearest chosen centroid.
fn plus_plus_init<T: Scalar>(x: &Array2<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2_rows(x, i, chosen[0]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target && *w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // coincident leftovers: first index not already chosen
            (0..n)
                .find(|i| !chosen.contains(i))
                .expect("k <= n leaves an unchosen point")
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(dist2_rows(x, i, next));
        }
    }
    chosen
}

fn dist2_rows<T: Scalar>(x: &Array2<T>, a: usize, b: usize) -> f64 {
    let mut acc = 0.0f64;
    for j in 0..x.ncols() {
        let d = x[(a, j)].as_f64() - x[(b, j)].as_f64();
        acc += d * d;
    }
    acc
}

fn assign_all<T: Scalar>(x: &Array2<T>, centroids: &Array2<T>) -> Vec<usize> {
    let k = centroids.nrows();
    (0..x.nrows())
        .map(|i| {
            let mut best = 0usize;
            let mut best_d = dist2(x, i, centroids, 0);
            for c in 1..k {
                let d = dist2(x, i, centroids, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Reseeds each empty cluster to the point farthest from its assigned
/// centroid, never stealing a singleton cluster's only member.
fn repair_empty<T: Scalar>(
    x: &Array2<T>,
    centroids: &mut Array2<T>,
    assignments: &mut [usize],
) -> bool {
    let k = centroids.nrows();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut repaired = false;
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut far: Option<(usize, T)> = None;
        for i in 0..x.nrows() {
            if counts[assignments[i]] <= 1 {
                continue;
            }
            let d = dist2(x, i, centroids, assignments[i]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (idx, _) = far.expect("a non-singleton cluster exists when another is empty");
        counts[assignments[idx]] -= 1;
        assignments[idx] = j;
        counts[j] = 1;
        for col in 0..x.ncols() {
            centroids[(j, col)] = x[(idx, col)];
        }
        repaired = true;
    }
    repaired
}

pub fn kmeans<T: Scalar>(
    x: &Array2<T>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel<T>> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    if k > n {
        return Err(Error::Precondition(format!("k={k} exceeds n={n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("input contains non-finite values".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = plus_plus_init(x, k, &mut rng);
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, &idx) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(idx));
    }

    let tol_t = T::from_f64_c(tol);
    for _ in 0..max_iter {
        let mut assignments = assign_all(x, &centroids);
        repair_empty(x, &mut centroids, &mut assignments);

        let mut new_centroids: Array2<T> = Array2::zeros((k, x.ncols()));
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for j in 0..x.ncols() {
                new_centroids[(a, j)] += x[(i, j)];
            }
        }
        for c in 0..k {
            let denom = T::from_usize_c(counts[c].max(1));
            for j in 0..x.ncols() {
                new_centroids[(c, j)] /= denom;
            }
        }

        let mut shift = T::zero();
        for c in 0..k {
            let mut acc = T::zero();
            for j in 0..x.ncols() {
                let d = new_centroids[(c, j)] - centroids[(c, j)];
                acc += d * d;
            }
            let dist = acc.sqrt();
            if dist > shift {
                shift = dist;
            }
        }
        centroids = new_centroids;
        if shift < tol_t {
            break;
        }
    }

    // final fixed-point assignment against the frozen centroids
    let mut assignments = assign_all(x, &centroids);
    while repair_empty(x, &mut centroids, &mut assignments) {
        assignments = assign_all(x, &centroids);
    }

    let mut inertia = T::zero();
    for (i, &a) in assignments.iter().enumerate() {
        inertia += dist2(x, i, &centroids, a);
    }
    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        seed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElbowResult {
    pub selected_k: usize,
    /// (k, inertia) for every candidate, in range order.
    pub inertias: Vec<(usize, f64)>,
    /// Set when all inertias were equal and the smallest interior k was
    /// returned by convention.
    pub degenerate: bool,
}

/// Picks the interior k maximizing the inertia curve's second difference.
pub fn elbow_select<T: Scalar>(
    x: &Array2<T>,
    k_range: &[usize],
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ElbowResult> {
    if k_range.len() < 3 {
        return Err(Error::Precondition("k_range needs at least 3 entries".into()));
    }
    if k_range.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("k_range must be strictly ascending".into()));
    }
    let mut inertias = Vec::with_capacity(k_range.len());
    for &k in k_range {
        let model = kmeans(x, k, seed, max_iter, tol)?;
        inertias.push((k, model.inertia.as_f64()));
    }
    let values: Vec<f64> = inertias.iter().map(|(_, i)| *i).collect();
    let (idx, degenerate) = elbow_from_inertias(&values);
    Ok(ElbowResult {
        selected_k: k_range[idx],
        inertias,
        degenerate,
    })
}

/// Positional elbow rule: maximize (I[i-1] - I[i]) - (I[i] - I[i+1]) over
/// interior positions, ties toward the smaller k. Returns (index, degenerate).
pub fn elbow_from_inertias(inertias: &[f64]) -> (usize, bool) {
    assert!(inertias.len() >= 3, "need at least 3 inertia values");
    let max = inertias.iter().cloned().fold(f64::MIN, f64::max);
    let min = inertias.iter().cloned().fold(f64::MAX, f64::min);
    if (max - min).abs() <= 1e-12 * max.abs().max(1.0) {
        return (1, true);
    }
    let mut best_idx = 1usize;
    let mut best_curv = f64::MIN;
    for i in 1..inertias.len() - 1 {
        let curv = (inertias[i - 1] - inertias[i]) - (inertias[i] - inertias[i + 1]);
        if curv > best_curv {
            best_curv = curv;
            best_idx = i;
        }
    }
    (best_idx, false)
}

//! Truncated SVD via eigendecomposition of the Gram matrix.
//!
//! The input has already been compressed (columns ≤ a few hundred), so the
//! k×k Gram matrix CᵀC is small: a cyclic Jacobi eigensolver handles it with
//! high accuracy. Left singular vectors come from U = C V Σ⁻¹, re-orthonormalized
//! by modified Gram-Schmidt, and columns for vanishing singular values are
//! completed from the standard basis so U stays column-orthonormal at any rank.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rank-r factors C ≈ U diag(S) Vᵀ with column-orthonormal U, V.
#[derive(Debug, Clone)]
pub struct SvdFactors<T: Scalar> {
    pub u: Array2<T>,
    pub s: Array1<T>,
    pub v: Array2<T>,
    pub rank: usize,
}

impl<T: Scalar> SvdFactors<T> {
    pub fn reconstruct(&self) -> Array2<T> {
        let mut sv_t = Array2::zeros((self.rank, self.v.nrows()));
        for i in 0..self.rank {
            for j in 0..self.v.nrows() {
                sv_t[(i, j)] = self.s[i] * self.v[(j, i)];
            }
        }
        self.u.dot(&sv_t)
    }

    /// Max-entry residuals of UᵀU − I and VᵀV − I.
    pub fn orthonormality_residual(&self) -> (f64, f64) {
        (gram_residual(&self.u), gram_residual(&self.v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.ncols() != self.rank || self.v.ncols() != self.rank || self.s.len() != self.rank
        {
            return Err(Error::ShapeMismatch {
                expected: format!("rank {} factors", self.rank),
                got: format!(
                    "u:{:?} s:{} v:{:?}",
                    self.u.dim(),
                    self.s.len(),
                    self.v.dim()
                ),
            });
        }
        for w in self.s.windows(2) {
            if w[1] > w[0] {
                return Err(Error::Precondition(
                    "singular values must be non-increasing".into(),
                ));
            }
        }
        let (ru, rv) = self.orthonormality_residual();
        if ru > 1e-6 || rv > 1e-6 {
            return Err(Error::Precondition(format!(
                "orthonormality residual too large: U {ru:.2e}, V {rv:.2e}"
            )));
        }
        Ok(())
    }
}

fn gram_residual<T: Scalar>(m: &Array2<T>) -> f64 {
    let g = m.t().dot(m);
    let r = g.ncols();
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)].as_f64() - target).abs());
        }
    }
    worst
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvector columns), unsorted.
fn jacobi_eigh<T: Scalar>(a: &Array2<T>) -> (Vec<f64>, Array2<f64>) {
    let k = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| a[(i, j)].as_f64()).collect())
        .collect();
    let mut v = vec![vec![0.0f64; k]; k];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let frob: f64 = m
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let stop = frob * 1e-15 + f64::MIN_POSITIVE;

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for i in 0..k {
            for j in (i + 1)..k {
                off += 2.0 * m[i][j] * m[i][j];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[p][q];
                if apq.abs() <= stop / (k as f64) {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let mip = m[i][p];
                    let miq = m[i][q];
                    m[i][p] = c * mip - s * miq;
                    m[i][q] = s * mip + c * miq;
                }
                for j in 0..k {
                    let mpj = m[p][j];
                    let mqj = m[q][j];
                    m[p][j] = c * mpj - s * mqj;
                    m[q][j] = s * mpj + c * mqj;
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = c * vip - s * viq;
                    row[q] = s * vip + c * viq;
                }
            }
        }
    }

    let eigvals: Vec<f64> = (0..k).map(|i| m[i][i]).collect();
    let mut vecs = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            vecs[(i, j)] = v[i][j];
        }
    }
    (eigvals, vecs)
}

/// Rank-r SVD minimizing Frobenius reconstruction error, with the sign
/// convention that each V column's largest-magnitude entry is non-negative.
pub fn truncated_svd<T: Scalar>(c: &Array2<T>, r: usize) -> Result<SvdFactors<T>> {
    let (n, k) = c.dim();
    if r < 1 || r > n.min(k) {
        return Err(Error::Precondition(format!(
            "rank {r} out of range 1..={}",
            n.min(k)
        )));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("matrix contains non-finite values".into()));
    }

    let gram = c.t().dot(c);
    let (eigvals, eigvecs) = jacobi_eigh(&gram);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());

    let mut sigma = vec![0.0f64; r];
    let mut v = Array2::<f64>::zeros((k, r));
    for (col, &src) in order.iter().take(r).enumerate() {
        sigma[col] = eigvals[src].max(0.0).sqrt();
        for row in 0..k {
            v[(row, col)] = eigvecs[(row, src)];
        }
        // sign convention on V
        let mut best = 0usize;
        for row in 1..k {
            if v[(row, col)].abs() > v[(best, col)].abs() {
                best = row;
            }
        }
        if v[(best, col)] < 0.0 {
            for row in 0..k {
                v[(row, col)] = -v[(row, col)];
            }
        }
    }

    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let rank_tol = sigma_max * (n.max(k) as f64) * f64::EPSILON.sqrt();

    let cf: Array2<f64> = c.mapv(|x| x.as_f64());
    let mut u = Array2::<f64>::zeros((n, r));
    let mut is_null = vec![false; r];
    for col in 0..r {
        if sigma[col] > rank_tol {
            let vcol: Array1<f64> = v.column(col).to_owned();
            let ucol = cf.dot(&vcol);
            let norm: f64 = ucol.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 * sigma[col] {
                for row in 0..n {
                    u[(row, col)] = ucol[row] / sigma[col];
                }
                continue;
            }
        }
        is_null[col] = true;
    }

    // modified Gram-Schmidt over the computed columns, then complete the
    // null columns from the standard basis
    let mut built: Vec<usize> = Vec::new();
    for col in 0..r {
        if is_null[col] {
            continue;
        }
        for &prev in &built {
            let dot: f64 = (0..n).map(|i| u[(i, prev)] * u[(i, col)]).sum();
            for i in 0..n {
                u[(i, col)] -= dot * u[(i, prev)];
            }
        }
        let norm: f64 = (0..n).map(|i| u[(i, col)] * u[(i, col)]).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for i in 0..n {
                u[(i, col)] /= norm;
            }
            built.push(col);
        } else {
            is_null[col] = true;
        }
    }
    for col in 0..r {
        if !is_null[col] {
            continue;
        }
        let mut placed = false;
        for basis in 0..n {
            let mut cand = vec![0.0f64; n];
            cand[basis] = 1.0;
            for &prev in &built {
                let dot: f64 = (0..n).map(|i| u[(i, prev)] * cand[i]).sum();
                for (i, cv) in cand.iter_mut().enumerate() {
                    *cv -= dot * u[(i, prev)];
                }
            }
            let norm: f64 = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (i, cv) in cand.iter().enumerate() {
                    u[(i, col)] = cv / norm;
                }
                built.push(col);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Precondition(
                "could not complete orthonormal basis for U".into(),
            ));
        }
    }

    let factors = SvdFactors {
        u: u.mapv(T::from_f64_c),
        s: Array1::from_iter(sigma.into_iter().map(T::from_f64_c)),
        v: v.mapv(T::from_f64_c),
        rank: r,
    };
    factors.validate()?;
    Ok(factors)
}

/// Cumulative share of squared singular values; non-decreasing, ends at 1.
pub fn explained_variance<T: Scalar>(s: &Array1<T>) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Err(Error::Precondition("singular values must be non-empty".into()));
    }
    if s.iter().any(|x| *x < T::zero()) {
        return Err(Error::Precondition("singular values must be non-negative".into()));
    }
    let squares: Vec<f64> = s.iter().map(|x| x.as_f64() * x.as_f64()).collect();
    let total: f64 = squares.iter().sum();
    if total == 0.0 {
        return Err(Error::Precondition("all singular values are zero".into()));
    }
    let mut acc = 0.0;
    Ok(squares
        .iter()
        .map(|sq| {
            acc += sq;
            acc / total
        })
        .collect())
}

/// Smallest component count whose cumulative ratio reaches `threshold`.
pub fn select_rank(ratios: &[f64], threshold: f64) -> Result<usize> {
    if ratios.is_empty() {
        return Err(Error::Precondition("ratios must be non-empty".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Precondition(format!(
            "threshold {threshold} must lie in (0, 1]"
        )));
    }
    for (i, ratio) in ratios.iter().enumerate() {
        if *ratio >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(ratios.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_singular_values() {
        let c: Array2<f64> = array![[3.0, 0.0], [0.0, 2.0]];
        let f = truncated_svd(&c, 2).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-12);
        assert!((f.s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_ones_matrix() {
        let c: Array2<f64> = array![[1.0, 1.0], [1.0, 1.0]];
        let f = truncated_svd(&c, 2).unwrap();
        assert!((f.s[0] - 2.0).abs() < 1e-9);
        assert!(f.s[1].abs() < 1e-7);
        // U must still be orthonormal despite the zero singular value
        let (ru, rv) = f.orthonormality_residual();
        assert!(ru < 1e-8 && rv < 1e-8);
    }

    #[test]
    fn full_rank_reconstruction_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
        let f = truncated_svd(&c, 4).unwrap();
        let rec = f.reconstruct();
        let num: f64 = (&rec - &c).iter().map(|x| x * x).sum::<f64>().sqrt();
        let den: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(num / den < 1e-6, "relative error {}", num / den);
    }

    #[test]
    fn truncation_error_non_increasing_in_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Array2::from_shape_fn((8, 5), |_| rng.random_range(-1.0..1.0));
        let mut prev = f64::INFINITY;
        for r in 1..=5 {
            let f = truncated_svd(&c, r).unwrap();
            let rec = f.reconstruct();
            let err: f64 = (&rec - &c).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err <= prev + 1e-9);
            prev = err;
        }
    }

    #[test]
    fn rank_out_of_range_errors() {
        let c: Array2<f64> = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(truncated_svd(&c, 0).is_err());
        assert!(truncated_svd(&c, 3).is_err());
    }

    #[test]
    fn sign_convention_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c: Array2<f64> = Array2::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
        let f = truncated_svd(&c, 3).unwrap();
        for col in 0..3 {
            let mut best = 0usize;
            for row in 1..3 {
                if f.v[(row, col)].abs() > f.v[(best, col)].abs() {
                    best = row;
                }
            }
            assert!(f.v[(best, col)] >= 0.0);
        }
    }

    #[test]
    fn explained_variance_cases() {
        let r = explained_variance(&array![4.0, 3.0]).unwrap();
        assert!((r[0] - 0.64).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-15);

        let r = explained_variance(&array![5.0]).unwrap();
        assert_eq!(r, vec![1.0]);

        let r = explained_variance(&array![3.0, 3.0, 3.0]).unwrap();
        assert!((r[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((r[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r[2], 1.0);
    }

    #[test]
    fn explained_variance_rejects_degenerate() {
        assert!(explained_variance::<f64>(&array![]).is_err());
        assert!(explained_variance(&array![0.0, 0.0]).is_err());
    }

    #[test]
    fn select_rank_cases() {
        assert_eq!(select_rank(&[0.5, 0.85, 0.92, 1.0], 0.90).unwrap(), 3);
        assert_eq!(select_rank(&[0.95, 1.0], 0.90).unwrap(), 1);
        assert_eq!(select_rank(&[0.4, 0.8, 1.0], 1.0).unwrap(), 3);
    }
}

//! Unbiased distance covariance and distance correlation.
//!
//! The squared distance covariance is estimated by its U-statistic. Two
//! evaluation routes are provided: the literal average of the order-4 kernel
//! over all 4-subsets ([`dcov_u_naive`], O(n^4), kept as a reference) and the
//! U-centred distance matrix form ([`dcov_u_fast`], O(n^2)) used in training.

use crate::error::{DdrError, Result};
use crate::matrix::{euclidean, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseDistances {
    pub n: usize,
    pub d: Matrix,
}

pub fn pairwise_distances(x: &Matrix) -> PairwiseDistances {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclidean(x.row(i), x.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    PairwiseDistances { n, d }
}

fn check_pair(z: &Matrix, y: &Matrix) -> Result<usize> {
    if z.rows() != y.rows() {
        return Err(DdrError::dim(format!(
            "paired samples must have equal rows ({} vs {})",
            z.rows(),
            y.rows()
        )));
    }
    if z.rows() < 4 {
        return Err(DdrError::InsufficientSamples {
            needed: 4,
            got: z.rows(),
        });
    }
    Ok(z.rows())
}

/// Order-4 kernel on the distance sub-matrices of four sample points.
fn kernel4(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> f64 {
    let mut cross = 0.0;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut rows = 0.0;
    for i in 0..4 {
        let mut ra = 0.0;
        let mut rb = 0.0;
        for j in 0..4 {
            if i != j {
                cross += a[i][j] * b[i][j];
                ra += a[i][j];
                rb += b[i][j];
            }
        }
        sum_a += ra;
        sum_b += rb;
        rows += ra * rb;
    }
    cross / 4.0 + sum_a * sum_b / 24.0 - rows / 4.0
}

/// Exact U-statistic by enumerating every 4-subset.
pub fn dcov_u_naive(z: &Matrix, y: &Matrix) -> Result<f64> {
    let n = check_pair(z, y)?;
    let a = pairwise_distances(z).d;
    let b = pairwise_distances(y).d;
    let mut total = 0.0;
    let mut count = 0u64;
    let mut sa = [[0.0; 4]; 4];
    let mut sb = [[0.0; 4]; 4];
    for i1 in 0..n {
        for i2 in (i1 + 1)..n {
            for i3 in (i2 + 1)..n {
                for i4 in (i3 + 1)..n {
                    let idx = [i1, i2, i3, i4];
                    for p in 0..4 {
                        for q in 0..4 {
                            sa[p][q] = a[(idx[p], idx[q])];
                            sb[p][q] = b[(idx[p], idx[q])];
                        }
                    }
                    total += kernel4(&sa, &sb);
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

/// U-centred distance matrix: zero diagonal, off-diagonal
/// `a_ij - a_i./(n-2) - a_.j/(n-2) + a_../((n-1)(n-2))`.
pub fn u_center(dist: &Matrix) -> Matrix {
    let n = dist.rows();
    let nf = n as f64;
    let row_sums: Vec<f64> = dist.row_iter().map(|r| r.iter().sum()).collect();
    let total: f64 = row_sums.iter().sum();
    let grand = total / ((nf - 1.0) * (nf - 2.0));
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[(i, j)] =
                    dist[(i, j)] - (row_sums[i] + row_sums[j]) / (nf - 2.0) + grand;
            }
        }
    }
    out
}

fn u_inner(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows() as f64;
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    s / (n * (n - 3.0))
}

/// O(n^2) evaluation of the same U-statistic via U-centred distance matrices.
pub fn dcov_u_fast(z: &Matrix, y: &Matrix) -> Result<f64> {
    check_pair(z, y)?;
    let a = u_center(&pairwise_distances(z).d);
    let b = u_center(&pairwise_distances(y).d);
    Ok(u_inner(&a, &b))
}

/// Value and gradient of [`dcov_u_fast`] with respect to the rows of `z`.
///
/// U-centring is an orthogonal projection under the `sum_{i != j}` inner
/// product, so `dV/da_ij = B~_ij / (n (n - 3))`; the chain rule through
/// `a_ij = |z_i - z_j|` then gives
/// `dV/dz_i = 2/(n(n-3)) sum_j B~_ij (z_i - z_j) / a_ij`.
/// Coincident points (`a_ij = 0`) contribute nothing.
pub fn dcov_value_and_gradient(z: &Matrix, y: &Matrix) -> Result<(f64, Matrix)> {
    let n = check_pair(z, y)?;
    let dist_z = pairwise_distances(z).d;
    let a = u_center(&dist_z);
    let b = u_center(&pairwise_distances(y).d);
    let value = u_inner(&a, &b);
    let scale = 2.0 / (n as f64 * (n as f64 - 3.0));
    let d = z.cols();
    let mut grad = Matrix::zeros(n, d);
    for i in 0..n {
        let zi = z.row(i);
        let mut acc = vec![0.0; d];
        for j in 0..n {
            let dij = dist_z[(i, j)];
            if j == i || dij == 0.0 {
                continue;
            }
            let w = b[(i, j)] / dij;
            for (acc_k, (zik, zjk)) in acc.iter_mut().zip(zi.iter().zip(z.row(j))) {
                *acc_k += w * (zik - zjk);
            }
        }
        for (g, v) in grad.row_mut(i).iter_mut().zip(acc) {
            *g = scale * v;
        }
    }
    Ok((value, grad))
}

pub fn dcov_gradient(z: &Matrix, y: &Matrix) -> Result<Matrix> {
    Ok(dcov_value_and_gradient(z, y)?.1)
}

/// Bias-corrected distance correlation, clamped to `[-1, 1]`.
///
/// Returns 0 when either self-covariance is non-positive or not finite.
pub fn dcorr(z: &Matrix, y: &Matrix) -> Result<f64> {
    check_pair(z, y)?;
    let a = u_center(&pairwise_distances(z).d);
    let b = u_center(&pairwise_distances(y).d);
    let zy = u_inner(&a, &b);
    let zz = u_inner(&a, &a);
    let yy = u_inner(&b, &b);
    let denom = zz * yy;
    if !(denom > 0.0) || !denom.is_finite() || !zy.is_finite() {
        return Ok(0.0);
    }
    Ok((zy / denom.sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DdrRng;

    #[test]
    fn distances_basic() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]).unwrap();
        assert_eq!(pairwise_distances(&x).d[(0, 1)], 5.0);
        let same = Matrix::filled(3, 2, 1.5);
        assert!(pairwise_distances(&same).d.as_slice().iter().all(|&v| v == 0.0));
        let one = Matrix::from_rows(&[[2.0]]).unwrap();
        assert_eq!(pairwise_distances(&one).d, Matrix::zeros(1, 1));
    }

    #[test]
    fn degenerate_inputs_give_zero() {
        let mut rng = DdrRng::new(4);
        let z = rng.normal_matrix(9, 2);
        let c = Matrix::filled(9, 1, 3.0);
        assert_eq!(dcov_u_naive(&z, &c).unwrap(), 0.0);
        assert_eq!(dcov_u_naive(&c, &z).unwrap(), 0.0);
        assert_eq!(dcov_u_fast(&z, &c).unwrap(), 0.0);
        assert_eq!(dcorr(&z, &c).unwrap(), 0.0);
        let g = dcov_gradient(&z, &c).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_samples_rejected() {
        let z = Matrix::zeros(3, 1);
        assert!(matches!(
            dcov_u_fast(&z, &z),
            Err(DdrError::InsufficientSamples { needed: 4, got: 3 })
        ));
        assert!(dcov_u_naive(&z, &z).is_err());
        assert!(dcov_u_fast(&Matrix::zeros(5, 1), &Matrix::zeros(6, 1)).is_err());
    }

    #[test]
    fn estimators_agree_on_seeded_instance() {
        let mut rng = DdrRng::new(6);
        let z = rng.normal_matrix(6, 2);
        let y = Matrix::column_vector(&z.column(0));
        let naive = dcov_u_naive(&z, &y).unwrap();
        let fast = dcov_u_fast(&z, &y).unwrap();
        assert!((naive - fast).abs() <= 1e-12, "{naive} vs {fast}");
    }

    #[test]
    fn dcorr_of_identical_samples_is_one() {
        let mut rng = DdrRng::new(8);
        let z = rng.normal_matrix(30, 3);
        assert!((dcorr(&z, &z).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_finite_with_duplicate_rows() {
        let mut z = DdrRng::new(2).normal_matrix(8, 2);
        let r0 = z.row(0).to_vec();
        z.row_mut(1).copy_from_slice(&r0);
        let y = DdrRng::new(3).normal_matrix(8, 1);
        assert!(dcov_gradient(&z, &y).unwrap().is_finite());
    }
}

//! Small descriptive statistics shared by the reports and the test oracles.

use crate::error::{DdrError, Result};
use crate::matrix::Matrix;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance (divisor `n - 1`); 0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Standard error of the mean, `sd / sqrt(k)`.
pub fn standard_error(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (sample_variance(values) / values.len() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MardiaSkewness {
    /// `b_{1,d}`.
    pub b1: f64,
    /// `n b_{1,d} / 6`, asymptotically chi-squared.
    pub statistic: f64,
    pub degrees_of_freedom: usize,
}

/// Mardia's multivariate skewness using the ML covariance estimate.
pub fn mardia_skewness(z: &Matrix) -> Result<MardiaSkewness> {
    let (n, d) = z.shape();
    if n <= d {
        return Err(DdrError::InsufficientSamples {
            needed: d + 1,
            got: n,
        });
    }
    let means = z.col_means();
    let centred = Matrix::from_fn(n, d, |i, j| z[(i, j)] - means[j]);
    let mut cov = centred.transposed_matmul(&centred)?;
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= n as f64);
    let inv = invert_spd(&cov)?;
    // G = C S^-1 C^T, b1 = sum_ij G_ij^3 / n^2
    let cs = centred.matmul(&inv)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let g: f64 = crate::matrix::dot(cs.row(i), centred.row(j));
            total += g * g * g;
        }
    }
    let b1 = total / (n * n) as f64;
    Ok(MardiaSkewness {
        b1,
        statistic: n as f64 * b1 / 6.0,
        degrees_of_freedom: d * (d + 1) * (d + 2) / 6,
    })
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn invert_spd(a: &Matrix) -> Result<Matrix> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = cholesky_solve(&l, &e);
        inv.set_column(col, &x);
    }
    Ok(inv)
}

/// Lower Cholesky factor; fails on non-positive pivots.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(DdrError::dim("cholesky needs a square matrix"));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if !(s > 0.0) {
            return Err(DdrError::numeric(format!(
                "matrix not positive definite (pivot {j} = {s:e})"
            )));
        }
        let ljj = s.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut t = a[(i, j)];
            for k in 0..j {
                t -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = t / ljj;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given the lower factor.
pub fn cholesky_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

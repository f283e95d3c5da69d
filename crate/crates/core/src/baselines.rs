//! Linear sufficient-dimension-reduction baselines and downstream evaluators.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};
use crate::matrix::{dot, Matrix};
use crate::stats::{cholesky, cholesky_solve};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order; column `i` of the returned
/// matrix is the eigenvector for eigenvalue `i`.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let m = a.rows();
    if m != a.cols() {
        return Err(DdrError::dim(format!("sym_eig needs a square matrix, got {}x{}", m, a.cols())));
    }
    let scale = a.as_slice().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    for i in 0..m {
        for j in (i + 1)..m {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * (1.0 + scale) {
                return Err(DdrError::invalid(format!(
                    "matrix not symmetric at ({i}, {j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    let mut s = a.clone();
    let mut v = Matrix::identity(m);
    for _sweep in 0..100 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[(i, j)] * s[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * (1.0 + scale) {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..m {
                    let skp = s[(k, p)];
                    let skq = s[(k, q)];
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..m {
                    let spk = s[(p, k)];
                    let sqk = s[(q, k)];
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                for k in 0..m {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| s[(j, j)].total_cmp(&s[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| s[(i, i)]).collect();
    Ok((values, v.select_columns(&order)))
}

/// Modified Gram-Schmidt (two passes) on the columns of `b`.
pub fn orthonormalize_columns(b: &Matrix) -> Result<Matrix> {
    let (p, d) = b.shape();
    let mut cols: Vec<Vec<f64>> = (0..d).map(|j| b.column(j)).collect();
    for j in 0..d {
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                rest[0].iter_mut().zip(&done[k]).for_each(|(x, q)| *x -= proj * q);
            }
        }
        let norm = dot(&cols[j], &cols[j]).sqrt();
        if !(norm > 1e-12) {
            return Err(DdrError::numeric(format!("direction {j} is linearly dependent")));
        }
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut out = Matrix::zeros(p, d);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerMethod {
    Sir,
    Save,
    Pca,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearReducer {
    /// `p x d`, orthonormal columns.
    pub directions: Matrix,
    pub method: ReducerMethod,
    /// Full spectrum of the kernel matrix, descending.
    pub eigenvalues: Vec<f64>,
}

impl LinearReducer {
    pub fn dim(&self) -> usize {
        self.directions.cols()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.directions)
    }
}

/// Partition of the sample into slices of the response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub h: usize,
    /// Upper response value of every slice but the last.
    pub boundaries: Vec<f64>,
    pub assignment: Vec<usize>,
}

impl SliceSpec {
    /// Near-equal-count slices of the sorted response. Ties are never split;
    /// slices that end up empty are merged away with a warning.
    pub fn quantile(y: &[f64], h: usize) -> Result<Self> {
        let n = y.len();
        if h < 2 {
            return Err(DdrError::invalid(format!("need at least 2 slices, got {h}")));
        }
        if n < h {
            return Err(DdrError::InsufficientSamples { needed: h, got: n });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| y[i].total_cmp(&y[j]).then(i.cmp(&j)));
        let mut assignment = vec![0; n];
        let mut boundaries = Vec::new();
        let mut slice = 0;
        let mut start = 0;
        for target in 1..=h {
            let mut end = (target * n) / h;
            if end <= start {
                continue;
            }
            while end < n && y[order[end]] == y[order[end - 1]] {
                end += 1;
            }
            for &i in &order[start..end] {
                assignment[i] = slice;
            }
            if end < n {
                boundaries.push(y[order[end - 1]]);
            }
            slice += 1;
            start = end;
            if start == n {
                break;
            }
        }
        if slice < h {
            warn!("response ties reduced {h} requested slices to {slice}");
        }
        if slice < 2 {
            return Err(DdrError::invalid("response is constant; cannot form two slices"));
        }
        Ok(SliceSpec {
            h: slice,
            boundaries,
            assignment,
        })
    }

    /// One slice per distinct integer label, in label order.
    pub fn by_class(labels: &[usize]) -> Result<Self> {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(DdrError::invalid("need at least two classes to slice"));
        }
        let assignment = labels
            .iter()
            .map(|l| distinct.binary_search(l).expect("present"))
            .collect();
        Ok(SliceSpec {
            h: distinct.len(),
            boundaries: distinct[..distinct.len() - 1].iter().map(|&l| l as f64).collect(),
            assignment,
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.h];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

struct Whitened {
    z: Matrix,
    /// `Sigma^{-1/2}`
    inv_sqrt: Matrix,
}

fn whiten(x: &Matrix) -> Result<Whitened> {
    if x.rows() < 2 {
        return Err(DdrError::InsufficientSamples { needed: 2, got: x.rows() });
    }
    let cov = x.covariance();
    let (vals, vecs) = sym_eig(&cov)?;
    let p = x.cols();
    let inv_sqrt = Matrix::from_fn(p, p, |i, j| {
        (0..p)
            .map(|k| vecs[(i, k)] * vecs[(j, k)] / vals[k].max(1e-10).sqrt())
            .sum()
    });
    let mu = x.col_means();
    let centred = Matrix::from_fn(x.rows(), p, |i, j| x[(i, j)] - mu[j]);
    Ok(Whitened {
        z: centred.matmul(&inv_sqrt)?,
        inv_sqrt,
    })
}

fn check_fit_args(x: &Matrix, y_len: usize, d: usize) -> Result<()> {
    if x.rows() != y_len {
        return Err(DdrError::dim(format!("X has {} rows, y has {y_len}", x.rows())));
    }
    if d == 0 || d > x.cols() {
        return Err(DdrError::invalid(format!(
            "reduced dimension {d} must lie in 1..={}",
            x.cols()
        )));
    }
    Ok(())
}

fn finish(
    kernel: &Matrix,
    inv_sqrt: &Matrix,
    d: usize,
    method: ReducerMethod,
) -> Result<LinearReducer> {
    let (vals, vecs) = sym_eig(kernel)?;
    let top = vecs.select_columns(&(0..d).collect::<Vec<_>>());
    let directions = orthonormalize_columns(&inv_sqrt.matmul(&top)?)?;
    Ok(LinearReducer {
        directions,
        method,
        eigenvalues: vals,
    })
}

fn slice_stats(z: &Matrix, slices: &SliceSpec) -> Vec<(f64, Vec<f64>, Matrix)> {
    let n = z.rows() as f64;
    let p = z.cols();
    (0..slices.h)
        .filter_map(|h| {
            let idx: Vec<usize> = (0..z.rows()).filter(|&i| slices.assignment[i] == h).collect();
            if idx.is_empty() {
                return None;
            }
            let zs = z.select_rows(&idx);
            let m = zs.col_means();
            let k = idx.len() as f64;
            let cov = Matrix::from_fn(p, p, |a, b| {
                zs.row_iter().map(|r| (r[a] - m[a]) * (r[b] - m[b])).sum::<f64>() / k
            });
            Some((k / n, m, cov))
        })
        .collect()
}

/// Sliced inverse regression with caller-provided slices.
pub fn fit_sir_slices(x: &Matrix, slices: &SliceSpec, d: usize) -> Result<LinearReducer> {
    check_fit_args(x, slices.assignment.len(), d)?;
    let w = whiten(x)?;
    let p = x.cols();
    let mut m = Matrix::zeros(p, p);
    for (frac, mean, _) in slice_stats(&w.z, slices) {
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] += frac * mean[a] * mean[b];
            }
        }
    }
    finish(&m, &w.inv_sqrt, d, ReducerMethod::Sir)
}

/// Sliced average variance estimation with caller-provided slices.
pub fn fit_save_slices(x: &Matrix, slices: &SliceSpec, d: usize) -> Result<LinearReducer> {
    check_fit_args(x, slices.assignment.len(), d)?;
    let w = whiten(x)?;
    let p = x.cols();
    let mut m = Matrix::zeros(p, p);
    for (frac, _, cov) in slice_stats(&w.z, slices) {
        let i_minus = Matrix::identity(p).sub(&cov)?;
        let sq = i_minus.matmul(&i_minus)?;
        m.add_scaled(frac, &sq)?;
    }
    // symmetrise rounding
    let m = Matrix::from_fn(p, p, |a, b| 0.5 * (m[(a, b)] + m[(b, a)]));
    finish(&m, &w.inv_sqrt, d, ReducerMethod::Save)
}

pub fn fit_sir(x: &Matrix, y: &[f64], d: usize, h: usize) -> Result<LinearReducer> {
    check_fit_args(x, y.len(), d)?;
    fit_sir_slices(x, &SliceSpec::quantile(y, h)?, d)
}

pub fn fit_save(x: &Matrix, y: &[f64], d: usize, h: usize) -> Result<LinearReducer> {
    check_fit_args(x, y.len(), d)?;
    fit_save_slices(x, &SliceSpec::quantile(y, h)?, d)
}

pub fn fit_pca(x: &Matrix, d: usize) -> Result<LinearReducer> {
    check_fit_args(x, x.rows(), d)?;
    if x.rows() < 2 {
        return Err(DdrError::InsufficientSamples { needed: 2, got: x.rows() });
    }
    let (vals, vecs) = sym_eig(&x.covariance())?;
    let directions = vecs.select_columns(&(0..d).collect::<Vec<_>>());
    Ok(LinearReducer {
        directions,
        method: ReducerMethod::Pca,
        eigenvalues: vals,
    })
}

/// Least squares with intercept on centred features. A singular Gram matrix
/// gets a growing ridge jitter starting at `1e-10`.
pub fn ols_fit_predict(f_train: &Matrix, y_train: &[f64], f_test: &Matrix) -> Result<Vec<f64>> {
    let (n, d) = f_train.shape();
    if n != y_train.len() {
        return Err(DdrError::dim(format!("{n} feature rows but {} responses", y_train.len())));
    }
    if f_test.cols() != d {
        return Err(DdrError::dim("train and test features differ in width"));
    }
    if n == 0 {
        return Err(DdrError::InsufficientSamples { needed: 1, got: 0 });
    }
    let mu = f_train.col_means();
    let y_bar = y_train.iter().sum::<f64>() / n as f64;
    let fc = Matrix::from_fn(n, d, |i, j| f_train[(i, j)] - mu[j]);
    let mut gram = fc.transposed_matmul(&fc)?;
    let rhs: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| fc[(i, j)] * (y_train[i] - y_bar)).sum())
        .collect();
    let trace = (0..d).map(|j| gram[(j, j)]).sum::<f64>();
    let mut jitter = 1e-10 * (trace / d.max(1) as f64).max(1.0);
    let beta = loop {
        match cholesky(&gram) {
            Ok(l) => break cholesky_solve(&l, &rhs),
            Err(_) if jitter < 1e6 => {
                for j in 0..d {
                    gram[(j, j)] += jitter;
                }
                jitter *= 10.0;
            }
            Err(e) => return Err(e),
        }
    };
    let intercept = y_bar - dot(&mu, &beta);
    Ok(f_test.row_iter().map(|r| intercept + dot(r, &beta)).collect())
}

/// Euclidean k-nearest-neighbour vote. Vote ties go to the class with the
/// smaller mean neighbour distance, then the smaller label.
pub fn knn_classify(
    f_train: &Matrix,
    labels_train: &[usize],
    f_test: &Matrix,
    k: usize,
) -> Result<Vec<usize>> {
    let n = f_train.rows();
    if labels_train.len() != n {
        return Err(DdrError::dim("labels and training features differ in length"));
    }
    if k == 0 || k > n {
        return Err(DdrError::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    if f_test.cols() != f_train.cols() {
        return Err(DdrError::dim("train and test features differ in width"));
    }
    let classes = labels_train.iter().max().map_or(0, |m| m + 1);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(f_test.rows());
    for t in f_test.row_iter() {
        dist.clear();
        dist.extend(f_train.row_iter().enumerate().map(|(i, r)| {
            let d2: f64 = r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        }));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = vec![0usize; classes];
        let mut dsum = vec![0.0; classes];
        for &(d2, i) in &dist[..k] {
            votes[labels_train[i]] += 1;
            dsum[labels_train[i]] += d2.sqrt();
        }
        let best = (0..classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then((dsum[a] / votes[a] as f64).total_cmp(&(dsum[b] / votes[b] as f64)))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1 neighbours");
        out.push(best);
    }
    Ok(out)
}

/// Mean squared error.
pub fn prediction_error(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(DdrError::dim(format!(
            "{} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(DdrError::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y_true.len() as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    Ok(prediction_error(y_true, y_pred)?.sqrt())
}

pub fn accuracy(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() {
        return Err(DdrError::dim("label vectors differ in length"));
    }
    if labels_true.is_empty() {
        return Err(DdrError::InsufficientSamples { needed: 1, got: 0 });
    }
    let hits = labels_true.iter().zip(labels_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DdrRng;

    #[test]
    fn eig_small_cases() {
        let (v, _) = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0]);
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        let (v, e) = sym_eig(&a).unwrap();
        assert_eq!(v, vec![3.0, 1.0]);
        assert_eq!(e.column(0).iter().map(|x| x.abs()).collect::<Vec<_>>(), vec![0.0, 1.0]);
        let bad = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(sym_eig(&bad).is_err());
    }

    #[test]
    fn eig_reconstructs_random_symmetric() {
        let g = DdrRng::new(3).normal_matrix(6, 6);
        let a = Matrix::from_fn(6, 6, |i, j| g[(i, j)] + g[(j, i)]);
        let (vals, vecs) = sym_eig(&a).unwrap();
        let lam = Matrix::from_fn(6, 6, |i, j| if i == j { vals[i] } else { 0.0 });
        let back = vecs.matmul(&lam).unwrap().matmul_transposed(&vecs).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-8);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let norm = a.frobenius_norm();
        for i in 0..6 {
            let v = vecs.column(i);
            let av = a.matmul(&Matrix::column_vector(&v)).unwrap();
            let r: f64 = (0..6).map(|k| (av[(k, 0)] - vals[i] * v[k]).powi(2)).sum();
            assert!(r.sqrt() <= 1e-8 * norm);
        }
    }

    #[test]
    fn quantile_slices_keep_ties() {
        let y = [1.0, 1.0, 1.0, 2.0, 3.0, 4.0];
        let s = SliceSpec::quantile(&y, 3).unwrap();
        assert_eq!(s.assignment[0], s.assignment[1]);
        assert_eq!(s.assignment[1], s.assignment[2]);
        assert!(s.sizes().iter().all(|&c| c > 0));
        let s = SliceSpec::quantile(&[0.0, 0.0, 0.0, 1.0], 4).unwrap();
        assert_eq!(s.h, 2);
        assert!(SliceSpec::quantile(&[1.0; 5], 2).is_err());
    }

    #[test]
    fn binary_labels_slice_by_class() {
        let labels = [0, 1, 1, 0, 1];
        let s = SliceSpec::by_class(&labels).unwrap();
        assert_eq!(s.assignment, vec![0, 1, 1, 0, 1]);
        let q = SliceSpec::quantile(&[0.0, 1.0, 1.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(q.assignment, s.assignment);
    }

    #[test]
    fn single_slice_rejected() {
        let x = DdrRng::new(1).normal_matrix(20, 2);
        let y = x.column(0);
        assert!(fit_save(&x, &y, 1, 1).is_err());
        assert!(fit_sir(&x, &y, 3, 5).is_err());
    }

    #[test]
    fn pca_line_and_full_basis() {
        let x = Matrix::from_fn(50, 2, |i, j| (i as f64) * if j == 0 { 3.0 } else { 4.0 });
        let r = fit_pca(&x, 1).unwrap();
        let d = r.directions.column(0);
        assert!((d[0].abs() - 0.6).abs() < 1e-10 && (d[1].abs() - 0.8).abs() < 1e-10);
        assert!(r.eigenvalues[1].abs() < 1e-8 * r.eigenvalues[0]);
        let full = fit_pca(&DdrRng::new(2).normal_matrix(30, 3), 3).unwrap();
        let gram = full.directions.transposed_matmul(&full.directions).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(3)) < 1e-10);
        assert!(fit_pca(&x, 3).is_err());
    }

    #[test]
    fn ols_exact_and_constant_cases() {
        let f = Matrix::column_vector(&[1.0, 2.0, 3.0, 4.0]);
        let y = [2.0, 4.0, 6.0, 8.0];
        let p = ols_fit_predict(&f, &y, &Matrix::column_vector(&[0.0, 10.0])).unwrap();
        assert!(p[0].abs() < 1e-12 && (p[1] - 20.0).abs() < 1e-12);
        let c = Matrix::filled(4, 1, 5.0);
        let p = ols_fit_predict(&c, &y, &c).unwrap();
        assert!(p.iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn knn_basics() {
        let f = Matrix::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap();
        let labels = [0, 0, 1, 1];
        let t = Matrix::from_rows(&[[0.1], [9.0]]).unwrap();
        assert_eq!(knn_classify(&f, &labels, &t, 1).unwrap(), vec![0, 1]);
        assert_eq!(knn_classify(&f, &labels, &t, 2).unwrap(), vec![0, 1]);
        // 2-2 vote tie at k=4: nearest mean distance wins
        assert_eq!(knn_classify(&f, &labels, &t, 4).unwrap(), vec![0, 1]);
        assert!(knn_classify(&f, &labels, &t, 5).is_err());
        assert!(knn_classify(&f, &labels, &t, 0).is_err());
    }

    #[test]
    fn metrics() {
        assert_eq!(prediction_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(prediction_error(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2], &[1, 2]).unwrap(), 1.0);
        assert!(prediction_error(&[0.0], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }
}

//! Simulated benchmark generators, CSV ingestion, standardisation and k-fold splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{DdrError, Result};
use crate::matrix::Matrix;
use crate::rng::DdrRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
    pub path: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub task: Task,
    pub feature_names: Option<Vec<String>>,
    pub target_names: Option<Vec<String>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix, task: Task, provenance: Provenance) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(DdrError::dim(format!(
                "X has {} rows but Y has {}",
                x.rows(),
                y.rows()
            )));
        }
        if task == Task::Classification {
            if y.cols() != 1 {
                return Err(DdrError::dim("classification needs a single label column"));
            }
            if let Some(bad) = y
                .as_slice()
                .iter()
                .find(|v| !(v.fract() == 0.0 && **v >= 0.0))
            {
                return Err(DdrError::invalid(format!(
                    "class labels must be non-negative integers, found {bad}"
                )));
            }
        }
        Ok(Dataset {
            x,
            y,
            task,
            feature_names: None,
            target_names: None,
            provenance,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            task: self.task,
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Class labels as integers (classification datasets).
    pub fn labels(&self) -> Vec<usize> {
        self.y.as_slice().iter().map(|&v| v as usize).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.labels().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Response used by the dependence term: the raw `Y` for regression and
    /// one-hot indicators for classification.
    pub fn response_matrix(&self) -> Matrix {
        match self.task {
            Task::Regression => self.y.clone(),
            Task::Classification => one_hot(&self.labels(), self.num_classes()),
        }
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes.max(1));
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = 1.0;
    }
    m
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

macro_rules! name_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = DdrError;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)+
                    other => Err(DdrError::invalid(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reg1Model {
    A,
    B,
}
name_enum!(Reg1Model { A => "a", B => "b" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reg2Model {
    A,
    B,
    C,
}
name_enum!(Reg2Model { A => "a", B => "b", C => "c" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    I,
    Ii,
    Iii,
}
name_enum!(Scenario { I => "i", Ii => "ii", Iii => "iii" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circles,
    Moons,
    Gauss3d6,
}
name_enum!(Shape { Circles => "circles", Moons => "moons", Gauss3d6 => "gauss3d6" });

/// Noise-free regression function of the first benchmark family.
pub fn regression1_mean(model: Reg1Model, x: &[f64]) -> f64 {
    match model {
        Reg1Model::A => x[0] / (0.5 + (x[1] + 1.5).powi(2)) + (1.0 + x[1]).powi(2),
        Reg1Model::B => (std::f64::consts::PI * x[0] + 1.0).sin().powi(2),
    }
}

/// 20 predictors; model (a) draws `X ~ N(0, I)`, model (b) `X ~ U[0,1]^20`,
/// and `Y = m(X) + sigma * eps` with standard normal `eps`.
pub fn gen_regression1(model: Reg1Model, n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(DdrError::invalid("n must be positive"));
    }
    if !(sigma >= 0.0) {
        return Err(DdrError::invalid("sigma must be non-negative"));
    }
    const P: usize = 20;
    let mut rng = DdrRng::new(seed);
    let mut x = Matrix::zeros(n, P);
    let mut y = Matrix::zeros(n, 1);
    for i in 0..n {
        for j in 0..P {
            x[(i, j)] = match model {
                Reg1Model::A => rng.standard_normal(),
                Reg1Model::B => rng.uniform(),
            };
        }
        y[(i, 0)] = regression1_mean(model, x.row(i)) + sigma * rng.standard_normal();
    }
    Dataset::new(
        x,
        y,
        Task::Regression,
        Provenance {
            generator: format!("regression1-{model}"),
            seed: Some(seed),
            params: params(&[("n", n.to_string()), ("sigma", sigma.to_string())]),
            path: None,
        },
    )
}

pub fn regression2_mean(model: Reg2Model, x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    match model {
        Reg2Model::A => (x1 + x2).powi(2) + (1.0 + x1.exp()).powi(2),
        Reg2Model::B => (std::f64::consts::PI * (x1 + x2) / 10.0).sin() + x1 * x1,
        Reg2Model::C => {
            let r = (x1 * x1 + x2 * x2).sqrt();
            // r log r -> 0 as r -> 0
            if r == 0.0 {
                0.0
            } else {
                r * r.ln()
            }
        }
    }
}

/// Ten predictors drawn per scenario; `Y = m(X) + eps`, `eps ~ N(0, 0.25)`.
pub fn gen_regression2(model: Reg2Model, scenario: Scenario, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(DdrError::invalid("n must be positive"));
    }
    const P: usize = 10;
    let mut rng = DdrRng::new(seed);
    let mut x = Matrix::zeros(n, P);
    let mut y = Matrix::zeros(n, 1);
    for i in 0..n {
        match scenario {
            Scenario::I => {
                for j in 0..P {
                    x[(i, j)] = rng.standard_normal();
                }
            }
            Scenario::Ii => {
                let component = rng.index(3);
                for j in 0..P {
                    x[(i, j)] = match component {
                        0 => -2.0 + rng.standard_normal(),
                        1 => rng.uniform_range(-1.0, 1.0),
                        _ => 2.0 + rng.standard_normal(),
                    };
                }
            }
            Scenario::Iii => {
                // 0.3 I + 0.7 11^T  =>  sqrt(0.3) e + sqrt(0.7) g 1
                let g = rng.standard_normal();
                for j in 0..P {
                    x[(i, j)] = 0.3f64.sqrt() * rng.standard_normal() + 0.7f64.sqrt() * g;
                }
            }
        }
        y[(i, 0)] = regression2_mean(model, x.row(i)) + 0.5 * rng.standard_normal();
    }
    Dataset::new(
        x,
        y,
        Task::Regression,
        Provenance {
            generator: format!("regression2-{model}-{scenario}"),
            seed: Some(seed),
            params: params(&[("n", n.to_string())]),
            path: None,
        },
    )
}

pub const CIRCLE_RADII: [f64; 2] = [1.0, 2.0];
pub const DEFAULT_CLASS_NOISE: f64 = 0.05;
pub const OCTAHEDRON_SCALE: f64 = 3.0;
pub const GAUSS3D6_SD: f64 = 0.75;

/// Low-dimensional toy sample before projection: `(points, labels)`.
pub fn classification_intrinsic(
    shape: Shape,
    n_per_class: usize,
    noise: f64,
    rng: &mut DdrRng,
) -> (Matrix, Vec<usize>) {
    use std::f64::consts::PI;
    let (classes, dim) = match shape {
        Shape::Circles | Shape::Moons => (2, 2),
        Shape::Gauss3d6 => (6, 3),
    };
    let mut pts = Matrix::zeros(classes * n_per_class, dim);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for c in 0..classes {
        for k in 0..n_per_class {
            let i = c * n_per_class + k;
            let row = pts.row_mut(i);
            match shape {
                Shape::Circles => {
                    let t = rng.uniform_range(0.0, 2.0 * PI);
                    row[0] = CIRCLE_RADII[c] * t.cos();
                    row[1] = CIRCLE_RADII[c] * t.sin();
                }
                Shape::Moons => {
                    let t = rng.uniform_range(0.0, PI);
                    if c == 0 {
                        row[0] = t.cos();
                        row[1] = t.sin();
                    } else {
                        row[0] = 1.0 - t.cos();
                        row[1] = 0.5 - t.sin();
                    }
                }
                Shape::Gauss3d6 => {
                    // octahedron vertices +-e_k
                    let axis = c / 2;
                    let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                    row[axis] = sign * OCTAHEDRON_SCALE;
                }
            }
            let sd = if shape == Shape::Gauss3d6 { GAUSS3D6_SD } else { noise };
            for v in row.iter_mut() {
                *v += sd * rng.standard_normal();
            }
            labels.push(c);
        }
    }
    (pts, labels)
}

/// Projected toy classification data `X = x P` with `P ~ U[0,1]^{k x ambient}`.
pub fn gen_classification(
    shape: Shape,
    n_per_class: usize,
    ambient_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    Ok(gen_classification_parts(shape, n_per_class, ambient_dim, noise, seed)?.0)
}

/// As [`gen_classification`], also returning the intrinsic points and the projection.
pub fn gen_classification_parts(
    shape: Shape,
    n_per_class: usize,
    ambient_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<(Dataset, Matrix, Matrix)> {
    let intrinsic_dim = if shape == Shape::Gauss3d6 { 3 } else { 2 };
    if ambient_dim < intrinsic_dim {
        return Err(DdrError::invalid(format!(
            "ambient dim {ambient_dim} below intrinsic dim {intrinsic_dim}"
        )));
    }
    if n_per_class == 0 {
        return Err(DdrError::invalid("n_per_class must be positive"));
    }
    let root = DdrRng::new(seed);
    let mut data_rng = root.fork(0);
    let (pts, labels) = classification_intrinsic(shape, n_per_class, noise, &mut data_rng);
    let projection = root
        .fork(1)
        .uniform_matrix(intrinsic_dim, ambient_dim, 0.0, 1.0);
    let x = pts.matmul(&projection)?;
    let y = Matrix::column_vector(&labels.iter().map(|&l| l as f64).collect::<Vec<_>>());
    let ds = Dataset::new(
        x,
        y,
        Task::Classification,
        Provenance {
            generator: format!("classification-{shape}"),
            seed: Some(seed),
            params: params(&[
                ("n_per_class", n_per_class.to_string()),
                ("ambient_dim", ambient_dim.to_string()),
                ("noise", noise.to_string()),
                ("circle_radii", format!("{:?}", CIRCLE_RADII)),
                ("moon_offset", "0.5".into()),
                ("octahedron_scale", OCTAHEDRON_SCALE.to_string()),
                ("gauss3d6_sd", GAUSS3D6_SD.to_string()),
            ]),
            path: None,
        },
    )?;
    Ok((ds, pts, projection))
}

/// Reads a numeric CSV; `target_columns` (0-based) become `Y`, the rest `X`.
///
/// Every offending cell is collected and the first ten are reported.
pub fn load_csv(
    path: impl AsRef<Path>,
    target_columns: &[usize],
    has_header: bool,
    task: Task,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DdrError::io(path, e))?;
    let mut ds = parse_csv(&text, target_columns, has_header, task)?;
    ds.provenance = Provenance {
        generator: "csv".into(),
        seed: None,
        params: BTreeMap::new(),
        path: Some(path.display().to_string()),
    };
    Ok(ds)
}

pub fn parse_csv(
    text: &str,
    target_columns: &[usize],
    has_header: bool,
    task: Task,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Option<Vec<String>> = if has_header {
        Some(
            reader
                .headers()
                .map_err(|e| DdrError::Parse(e.to_string()))?
                .iter()
                .map(|s| s.trim().to_string())
                .collect(),
        )
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (k, record) in reader.records().enumerate() {
        let line = k + 1 + usize::from(has_header);
        let record = record.map_err(|e| DdrError::Parse(format!("line {line}: {e}")))?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            problems.push(format!("line {line}: {} fields, expected {w}", record.len()));
            continue;
        }
        let mut row = Vec::with_capacity(w);
        for (col, cell) in record.iter().enumerate() {
            match cell.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => problems.push(format!("line {line}, column {}: '{cell}'", col + 1)),
            }
        }
        if row.len() == w {
            rows.push(row);
        }
    }
    if !problems.is_empty() {
        let shown: Vec<_> = problems.iter().take(10).cloned().collect();
        return Err(DdrError::Parse(format!(
            "{} bad cells/rows: {}",
            problems.len(),
            shown.join("; ")
        )));
    }
    let width = width.unwrap_or(0);
    if rows.is_empty() {
        return Err(DdrError::Parse("no data rows".into()));
    }
    if let Some(&bad) = target_columns.iter().find(|&&c| c >= width) {
        return Err(DdrError::invalid(format!(
            "target column {bad} out of range for {width} columns"
        )));
    }
    if target_columns.is_empty() {
        return Err(DdrError::invalid("at least one target column is required"));
    }
    let feature_cols: Vec<usize> = (0..width).filter(|c| !target_columns.contains(c)).collect();
    let all = Matrix::from_rows(&rows)?;
    let x = all.select_columns(&feature_cols);
    let y = all.select_columns(target_columns);
    let mut ds = Dataset::new(x, y, task, Provenance::default())?;
    if let Some(h) = header {
        ds.feature_names = Some(feature_cols.iter().map(|&c| h[c].clone()).collect());
        ds.target_names = Some(target_columns.iter().map(|&c| h[c].clone()).collect());
    }
    Ok(ds)
}

/// Writes `X` columns then `Y` columns with a header row. Values use the
/// shortest representation that round-trips exactly.
pub fn to_csv_string(ds: &Dataset) -> String {
    let p = ds.x.cols();
    let q = ds.y.cols();
    let x_names = ds
        .feature_names
        .clone()
        .unwrap_or_else(|| (1..=p).map(|j| format!("x{j}")).collect());
    let y_names = ds.target_names.clone().unwrap_or_else(|| {
        if q == 1 {
            vec!["y".into()]
        } else {
            (1..=q).map(|j| format!("y{j}")).collect()
        }
    });
    let mut out = String::with_capacity(ds.n() * (p + q) * 20);
    out.push_str(&x_names.iter().chain(&y_names).cloned().collect::<Vec<_>>().join(","));
    out.push('\n');
    for i in 0..ds.n() {
        let cells: Vec<String> = ds
            .x
            .row(i)
            .iter()
            .chain(ds.y.row(i))
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(ds)).map_err(|e| DdrError::io(path, e))
}

pub fn provenance_json(ds: &Dataset) -> String {
    let v = serde_json::json!({
        "generator": ds.provenance.generator,
        "seed": ds.provenance.seed,
        "params": ds.provenance.params,
        "path": ds.provenance.path,
        "task": ds.task,
        "rows": ds.n(),
        "features": ds.x.cols(),
        "targets": ds.y.cols(),
    });
    serde_json::to_string_pretty(&v).expect("json value serialises")
}

/// Column-wise affine transform fitted on one sample and reusable on others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    /// Present for regression targets only.
    pub y_mean: Option<Vec<f64>>,
    pub y_scale: Option<Vec<f64>>,
}

fn column_stats(m: &Matrix, what: &str) -> (Vec<f64>, Vec<f64>) {
    let means = m.col_means();
    let n = m.rows() as f64;
    let scales = (0..m.cols())
        .map(|j| {
            let var = m
                .row_iter()
                .map(|r| (r[j] - means[j]).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + means[j].abs()) {
                sd
            } else {
                warn!("{what} column {j} has zero variance; centring only");
                1.0
            }
        })
        .collect();
    (means, scales)
}

fn apply_columns(m: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] - mean[j]) / scale[j])
}

impl Scaler {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.n() < 2 {
            return Err(DdrError::InsufficientSamples {
                needed: 2,
                got: ds.n(),
            });
        }
        let (x_mean, x_scale) = column_stats(&ds.x, "feature");
        let (y_mean, y_scale) = match ds.task {
            Task::Regression => {
                let (m, s) = column_stats(&ds.y, "target");
                (Some(m), Some(s))
            }
            Task::Classification => (None, None),
        };
        Ok(Scaler {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        })
    }

    pub fn transform_x(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.x_mean.len() {
            return Err(DdrError::dim("scaler fitted on a different feature count"));
        }
        Ok(apply_columns(x, &self.x_mean, &self.x_scale))
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let mut out = ds.clone();
        out.x = self.transform_x(&ds.x)?;
        if let (Some(m), Some(s)) = (&self.y_mean, &self.y_scale) {
            if ds.y.cols() != m.len() {
                return Err(DdrError::dim("scaler fitted on a different target count"));
            }
            out.y = apply_columns(&ds.y, m, s);
        }
        Ok(out)
    }

    /// Maps standardised values of target column `col` back to the original scale.
    pub fn inverse_y(&self, col: usize, values: &[f64]) -> Vec<f64> {
        match (&self.y_mean, &self.y_scale) {
            (Some(m), Some(s)) => values.iter().map(|v| v * s[col] + m[col]).collect(),
            _ => values.to_vec(),
        }
    }
}

/// Standardises `X` (and regression `Y`) to zero mean and unit variance.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Scaler)> {
    let scaler = Scaler::fit(ds)?;
    Ok((scaler.apply(ds)?, scaler))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(train, test)` row indices for one fold, each in ascending order.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.n).partition(|&i| self.assignment[i] == fold);
        (train, test)
    }
}

/// Seeded shuffle followed by a contiguous partition; the first `n % k` folds
/// get one extra row.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(DdrError::invalid(format!("need k >= 2 folds, got {k}")));
    }
    if k > n {
        return Err(DdrError::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let perm = DdrRng::new(seed).permutation(n);
    let base = n / k;
    let extra = n % k;
    let mut assignment = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &perm[pos..pos + size] {
            assignment[row] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan {
        n,
        k,
        assignment,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression1_formulas() {
        assert!((regression1_mean(Reg1Model::A, &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        let ds = gen_regression1(Reg1Model::B, 500, 0.0, 3).unwrap();
        assert!(ds.y.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(ds.x.shape(), (500, 20));
        assert!(ds.x.as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn regression2_model_c_limits() {
        assert_eq!(regression2_mean(Reg2Model::C, &[0.0, 0.0]), 0.0);
        assert!(regression2_mean(Reg2Model::C, &[0.6, 0.8]).abs() < 1e-15);
        let ds = gen_regression2(Reg2Model::C, Scenario::I, 50, 1).unwrap();
        assert!(ds.y.is_finite());
    }

    #[test]
    fn circles_without_noise_sit_on_radii() {
        let mut rng = DdrRng::new(1);
        let (pts, labels) = classification_intrinsic(Shape::Circles, 100, 0.0, &mut rng);
        for (row, &l) in pts.row_iter().zip(&labels) {
            let r = (row[0] * row[0] + row[1] * row[1]).sqrt();
            assert!((r - CIRCLE_RADII[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn gauss3d6_has_six_means() {
        let mut rng = DdrRng::new(2);
        let (pts, labels) = classification_intrinsic(Shape::Gauss3d6, 400, 0.0, &mut rng);
        let mut means = [[0.0; 3]; 6];
        for (row, &l) in pts.row_iter().zip(&labels) {
            for k in 0..3 {
                means[l][k] += row[k] / 400.0;
            }
        }
        for a in 0..6 {
            for b in (a + 1)..6 {
                let d = crate::matrix::euclidean(&means[a], &means[b]);
                assert!(d > 3.0, "means {a} and {b} too close");
            }
        }
    }

    #[test]
    fn ambient_below_intrinsic_rejected() {
        assert!(gen_classification(Shape::Gauss3d6, 10, 2, 0.05, 0).is_err());
    }

    #[test]
    fn csv_parsing() {
        let ds = parse_csv("1,2,3\n4,5,6\n7,8,9\n", &[2], false, Task::Regression).unwrap();
        assert_eq!(ds.x.shape(), (3, 2));
        assert_eq!(ds.y.as_slice(), &[3.0, 6.0, 9.0]);

        let ds = parse_csv("a,b,t\n1,2,3\n4,5,6\n", &[2], true, Task::Regression).unwrap();
        assert_eq!(ds.feature_names.clone().unwrap(), vec!["a", "b"]);
        assert_eq!(ds.target_names.clone().unwrap(), vec!["t"]);
        assert_eq!(ds.n(), 2);

        let err = parse_csv("1,2\nabc,4\n", &[1], false, Task::Regression).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2, column 1") && msg.contains("abc"), "{msg}");

        let err = parse_csv("1,2\n3\n", &[1], false, Task::Regression).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn csv_reports_at_most_ten_offenders() {
        let text: String = (0..15).map(|i| format!("x{i},1\n")).collect();
        let msg = parse_csv(&text, &[1], false, Task::Regression)
            .unwrap_err()
            .to_string();
        assert!(msg.starts_with("parse error: 15 bad"));
        assert_eq!(msg.matches("line ").count(), 10);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv("/nonexistent/data.csv", &[0], false, Task::Regression).unwrap_err();
        assert!(matches!(err, DdrError::Io { .. }));
    }

    #[test]
    fn standardize_examples() {
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let y = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let ds = Dataset::new(x, y, Task::Regression, Provenance::default()).unwrap();
        let (s, scaler) = standardize(&ds).unwrap();
        assert_eq!(s.x.column(0), vec![-1.0, 1.0]);
        assert_eq!(s.x.column(1), vec![0.0, 0.0]);
        assert_eq!(scaler.x_scale[1], 1.0);
        assert_eq!(scaler.inverse_y(0, &s.y.column(0)), vec![0.0, 2.0]);
    }

    #[test]
    fn kfold_sizes() {
        let p = kfold_split(10, 5, 1).unwrap();
        assert_eq!(p.fold_sizes(), vec![2; 5]);
        let p = kfold_split(11, 5, 1).unwrap();
        assert_eq!(p.fold_sizes(), vec![3, 2, 2, 2, 2]);
        assert_eq!(kfold_split(11, 5, 1).unwrap(), p);
        assert!(kfold_split(3, 5, 1).is_err());
        assert!(kfold_split(10, 1, 1).is_err());
        let (train, test) = p.split(0);
        assert_eq!(train.len() + test.len(), 11);
    }

    #[test]
    fn labels_validated() {
        let x = Matrix::zeros(2, 1);
        let y = Matrix::column_vector(&[0.0, 1.5]);
        assert!(Dataset::new(x, y, Task::Classification, Provenance::default()).is_err());
    }
}

//! K-fold comparison harness.
//!
//! Each fold standardises on its training part, extracts features with one
//! method, fits OLS (regression) or kNN (classification) on those features
//! and scores the held-out part. Failures are recorded per fold and do not
//! stop the run.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{
    accuracy, fit_pca, fit_save_slices, fit_sir_slices, knn_classify, ols_fit_predict,
    prediction_error, SliceSpec,
};
use crate::datagen::{kfold_split, Dataset, Scaler, Task};
use crate::dependence::dcorr;
use crate::error::{DdrError, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, MlpNetwork, Optimizer};
use crate::rng::DdrRng;
use crate::stats::{mean, standard_error};
use crate::trainer::{ddr_train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ddr,
    Sir,
    Save,
    Pca,
    NnLs,
    Ols,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ddr => "ddr",
            Method::Sir => "sir",
            Method::Save => "save",
            Method::Pca => "pca",
            Method::NnLs => "nn_ls",
            Method::Ols => "ols",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DdrError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ddr" => Method::Ddr,
            "sir" => Method::Sir,
            "save" => Method::Save,
            "pca" => Method::Pca,
            "nn_ls" | "nnls" => Method::NnLs,
            "ols" => Method::Ols,
            other => return Err(DdrError::invalid(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub folds: usize,
    pub seed: u64,
    /// Output dimension of the linear reducers; `None` uses `train.rep_dim`.
    pub reduced_dim: Option<usize>,
    pub slices: usize,
    pub knn_k: usize,
    pub standardize: bool,
    pub train: TrainConfig,
    /// Worker threads; 1 is the reference (bit-reproducible) path.
    pub threads: usize,
    /// Keep the test features of fold 0 for plotting.
    pub keep_features: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::Ddr, Method::Sir, Method::Save, Method::Pca],
            folds: 5,
            seed: 0,
            reduced_dim: None,
            slices: 10,
            knn_k: 5,
            standardize: true,
            train: TrainConfig::regression(),
            threads: 1,
            keep_features: false,
        }
    }
}

impl BenchConfig {
    pub fn reducer_dim(&self) -> usize {
        self.reduced_dim.unwrap_or(self.train.rep_dim)
    }

    /// Hex SHA-256 prefix of the resolved configuration (thread count excluded).
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.threads = 1;
        canonical.keep_features = false;
        let json = serde_json::to_string(&canonical).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub method: Method,
    pub fold: usize,
    /// Original-scale MSE and RMSE (regression only).
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub accuracy: Option<f64>,
    /// Distance correlation of test features with the (standardised) response.
    pub dcorr: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub test_features: Option<(Matrix, Vec<usize>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub se: f64,
}

fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    Some(MetricSummary {
        mean: mean(values),
        se: if values.len() > 1 { standard_error(values) } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mse: Option<MetricSummary>,
    pub rmse: Option<MetricSummary>,
    pub accuracy: Option<MetricSummary>,
    pub dcorr: Option<MetricSummary>,
    pub folds_ok: usize,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub config: BenchConfig,
    pub config_hash: String,
    pub seed: u64,
    pub standardized: bool,
    pub folds: Vec<FoldResult>,
    /// Sorted best first: lowest RMSE for regression, highest accuracy otherwise.
    pub summaries: Vec<MethodSummary>,
}

impl RunReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn folds_csv(&self) -> String {
        let mut out = String::from("method,fold,mse,rmse,accuracy,dcorr,status,config_hash,seed\n");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                f.method,
                f.fold,
                cell(f.mse),
                cell(f.rmse),
                cell(f.accuracy),
                cell(f.dcorr),
                f.error.as_ref().map_or("ok".to_string(), |e| csv_escape(&format!("failed: {e}"))),
                self.config_hash,
                self.seed
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "rank,method,mse_mean,mse_se,rmse_mean,rmse_se,accuracy_mean,accuracy_se,\
             dcorr_mean,dcorr_se,folds_ok,status,standardized,config_hash,seed\n",
        );
        for (rank, s) in self.summaries.iter().enumerate() {
            let pair = |m: &Option<MetricSummary>| {
                m.as_ref()
                    .map_or(",".to_string(), |m| format!("{},{}", m.mean, m.se))
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                rank + 1,
                s.method,
                pair(&s.mse),
                pair(&s.rmse),
                pair(&s.accuracy),
                pair(&s.dcorr),
                s.folds_ok,
                if s.failed { "failed" } else { "ok" },
                self.standardized,
                format_args!("{},{}", self.config_hash, self.seed),
            );
        }
        out
    }

    /// Human-readable table with mean +- SE.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>18} {:>18} {:>18}", "method", "rmse", "accuracy", "dcorr");
        for s in &self.summaries {
            let fmt = |m: &Option<MetricSummary>| {
                m.as_ref()
                    .map_or("-".to_string(), |m| format!("{:.4} ± {:.4}", m.mean, m.se))
            };
            let _ = writeln!(
                out,
                "{:<8} {:>18} {:>18} {:>18}{}",
                s.method.name(),
                fmt(&s.rmse),
                fmt(&s.accuracy),
                fmt(&s.dcorr),
                if s.failed { "  (failed folds)" } else { "" }
            );
        }
        out
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

fn csv_escape(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Neural network followed by a linear head, trained on squared error; the
/// network output (before the head) is the feature map.
pub fn fit_nn_ls(x: &Matrix, y: &Matrix, cfg: &TrainConfig, seed: u64) -> Result<MlpNetwork> {
    let root = DdrRng::new(seed);
    let mut dims = vec![x.cols()];
    dims.extend_from_slice(&cfg.rep_hidden);
    dims.push(cfg.rep_dim);
    let act = Activation::leaky(cfg.leaky_slope)?;
    let mut rep = MlpNetwork::new(&dims, act, root.fork(1).seed())?;
    let mut head = MlpNetwork::new(&[cfg.rep_dim, y.cols()], act, root.fork(2).seed())?;
    let mut opt_rep = Optimizer::new(&cfg.rep_optimizer, &rep);
    let mut opt_head = Optimizer::new(&cfg.rep_optimizer, &head);
    let mut rng = root.fork(3);
    for epoch in 0..cfg.outer_loops {
        for idx in rng.permutation(x.rows()).chunks(cfg.batch_size) {
            let xb = x.select_rows(idx);
            let yb = y.select_rows(idx);
            let trace = rep.forward_trace(&xb)?;
            let feats = trace.output().clone();
            let head_trace = head.forward_trace(&feats)?;
            let resid = head_trace.output().sub(&yb)?;
            let g = resid.scale(2.0 / idx.len() as f64);
            let (g_head, g_feat) = head.backward_from(&head_trace, &g)?;
            let (g_rep, _) = rep.backward_from(&trace, &g_feat)?;
            opt_head
                .apply(&mut head, &g_head)
                .map_err(|e| DdrError::numeric(format!("nn_ls epoch {epoch}: {e}")))?;
            opt_rep
                .apply(&mut rep, &g_rep)
                .map_err(|e| DdrError::numeric(format!("nn_ls epoch {epoch}: {e}")))?;
        }
    }
    Ok(rep)
}

type FeatureMap = Box<dyn Fn(&Matrix) -> Result<Matrix>>;

fn features(
    method: Method,
    train: &Dataset,
    cfg: &BenchConfig,
    fold: usize,
) -> Result<FeatureMap> {
    let d = cfg.reducer_dim();
    let slices = || match train.task {
        Task::Classification => SliceSpec::by_class(&train.labels()),
        Task::Regression => SliceSpec::quantile(&train.y.column(0), cfg.slices),
    };
    Ok(match method {
        Method::Ddr => {
            let tc = TrainConfig {
                seed: cfg.train.seed.wrapping_add(fold as u64),
                ..cfg.train.clone()
            };
            let model = ddr_train(train, &tc)?;
            Box::new(move |x| model.embed(x))
        }
        Method::NnLs => {
            let seed = cfg.train.seed.wrapping_add(fold as u64);
            let net = fit_nn_ls(&train.x, &train.response_matrix(), &cfg.train, seed)?;
            Box::new(move |x| net.forward(x))
        }
        Method::Sir => {
            let r = fit_sir_slices(&train.x, &slices()?, d)?;
            Box::new(move |x| r.transform(x))
        }
        Method::Save => {
            let r = fit_save_slices(&train.x, &slices()?, d)?;
            Box::new(move |x| r.transform(x))
        }
        Method::Pca => {
            let r = fit_pca(&train.x, d)?;
            Box::new(move |x| r.transform(x))
        }
        Method::Ols => Box::new(|x: &Matrix| Ok(x.clone())),
    })
}

fn run_fold(
    ds: &Dataset,
    cfg: &BenchConfig,
    method: Method,
    fold: usize,
    split: &(Vec<usize>, Vec<usize>),
) -> Result<FoldResult> {
    let (tr, te) = split;
    let train_raw = ds.select_rows(tr);
    let test_raw = ds.select_rows(te);
    let (train, test, scaler) = if cfg.standardize {
        let scaler = Scaler::fit(&train_raw)?;
        (scaler.apply(&train_raw)?, scaler.apply(&test_raw)?, Some(scaler))
    } else {
        (train_raw, test_raw.clone(), None)
    };
    let map = features(method, &train, cfg, fold)?;
    let f_train = map(&train.x)?;
    let f_test = map(&test.x)?;
    if !f_train.is_finite() || !f_test.is_finite() {
        return Err(DdrError::numeric("features contain non-finite values"));
    }
    let mut result = FoldResult {
        method,
        fold,
        mse: None,
        rmse: None,
        accuracy: None,
        dcorr: None,
        error: None,
        test_features: None,
    };
    let labels_test = match ds.task {
        Task::Regression => {
            let mut sq = 0.0;
            for j in 0..ds.y.cols() {
                let pred = ols_fit_predict(&f_train, &train.y.column(j), &f_test)?;
                let pred = match &scaler {
                    Some(s) => s.inverse_y(j, &pred),
                    None => pred,
                };
                sq += prediction_error(&test_raw.y.column(j), &pred)?;
            }
            let mse = sq / ds.y.cols() as f64;
            result.mse = Some(mse);
            result.rmse = Some(mse.sqrt());
            Vec::new()
        }
        Task::Classification => {
            let pred = knn_classify(&f_train, &train.labels(), &f_test, cfg.knn_k)?;
            let truth = test.labels();
            result.accuracy = Some(accuracy(&truth, &pred)?);
            truth
        }
    };
    if f_test.rows() >= 4 {
        result.dcorr = Some(dcorr(&f_test, &test.response_matrix())?);
    }
    if cfg.keep_features && fold == 0 {
        result.test_features = Some((f_test, labels_test));
    }
    Ok(result)
}

/// One `(method, fold)` cell of [`run_benchmark`], computed on its own.
pub fn run_single_fold(ds: &Dataset, cfg: &BenchConfig, method: Method, fold: usize) -> Result<FoldResult> {
    cfg.train.validate()?;
    let plan = kfold_split(ds.n(), cfg.folds, cfg.seed)?;
    if fold >= cfg.folds {
        return Err(DdrError::invalid(format!("fold {fold} out of range 0..{}", cfg.folds)));
    }
    run_fold(ds, cfg, method, fold, &plan.split(fold))
}

/// Runs every `(method, fold)` pair, possibly on several threads, and
/// assembles the report in a fixed order.
pub fn run_benchmark(ds: &Dataset, cfg: &BenchConfig) -> Result<RunReport> {
    if cfg.methods.is_empty() {
        return Err(DdrError::invalid("no methods selected"));
    }
    cfg.train.validate()?;
    let plan = kfold_split(ds.n(), cfg.folds, cfg.seed)?;
    let splits: Vec<_> = (0..cfg.folds).map(|f| plan.split(f)).collect();
    let jobs: Vec<(Method, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.folds).map(move |f| (m, f)))
        .collect();
    let results: Mutex<Vec<Option<FoldResult>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let work = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(method, fold)) = jobs.get(k) else { break };
        let r = run_fold(ds, cfg, method, fold, &splits[fold]).unwrap_or_else(|e| {
            warn!("{method} fold {fold} failed: {e}");
            FoldResult {
                method,
                fold,
                mse: None,
                rmse: None,
                accuracy: None,
                dcorr: None,
                error: Some(e.to_string()),
                test_features: None,
            }
        });
        info!("{method} fold {fold} done");
        results.lock().expect("no poisoned workers")[k] = Some(r);
    };
    let threads = cfg.threads.clamp(1, jobs.len());
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    let folds: Vec<FoldResult> = results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();

    let mut summaries: Vec<MethodSummary> = cfg
        .methods
        .iter()
        .map(|&m| {
            let rows: Vec<&FoldResult> = folds.iter().filter(|f| f.method == m).collect();
            let ok: Vec<&&FoldResult> = rows.iter().filter(|f| f.error.is_none()).collect();
            let collect = |get: fn(&FoldResult) -> Option<f64>| {
                summarize(&ok.iter().filter_map(|f| get(f)).collect::<Vec<_>>())
            };
            MethodSummary {
                method: m,
                mse: collect(|f| f.mse),
                rmse: collect(|f| f.rmse),
                accuracy: collect(|f| f.accuracy),
                dcorr: collect(|f| f.dcorr),
                folds_ok: ok.len(),
                failed: ok.len() < rows.len(),
            }
        })
        .collect();
    let key = |s: &MethodSummary| match ds.task {
        Task::Regression => s.rmse.as_ref().map_or(f64::INFINITY, |m| m.mean),
        Task::Classification => s.accuracy.as_ref().map_or(f64::INFINITY, |m| -m.mean),
    };
    summaries.sort_by(|a, b| key(a).total_cmp(&key(b)));
    Ok(RunReport {
        task: ds.task,
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        standardized: cfg.standardize,
        folds,
        summaries,
    })
}

//! The DDR outer loop.
//!
//! Each epoch maps the data through the representer, pushes the resulting
//! particles towards `N(0, I)` with the particle flow, and then takes one
//! minibatch pass over the data on
//! `-dcov(R(X_b), Y_b) + lambda * mean |R(X_b) - Z_b|^2` with `Z` held fixed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::dependence::{dcov_u_fast, dcov_value_and_gradient};
use crate::divergence::{variational_divergence, FDivergence};
use crate::error::{DdrError, Result};
use crate::flow::{build_discriminator, clip_velocity, fit_discriminator, velocity_field};
use crate::matrix::Matrix;
use crate::nn::{
    read_networks, write_networks, Activation, MlpNetwork, Optimizer, OptimizerConfig,
    PiecewiseSchedule,
};
use crate::rng::DdrRng;

/// Which term of the representer loss carries `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaPlacement {
    /// `-dcov + lambda * match`
    Match,
    /// `match - lambda * dcov`
    Dcov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lambda_placement: LambdaPlacement,
    pub rep_dim: usize,
    pub batch_size: usize,
    /// Flow iterations per epoch (`T1`).
    pub inner_loops: usize,
    /// Epochs (`T2`).
    pub outer_loops: usize,
    pub step_schedule: PiecewiseSchedule,
    pub divergence: FDivergence,
    pub rep_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub rep_optimizer: OptimizerConfig,
    pub disc_optimizer: OptimizerConfig,
    /// Overrides the representer learning rate per epoch when set.
    pub rep_lr_schedule: Option<PiecewiseSchedule>,
    /// Discriminator passes over the particles per flow iteration.
    pub disc_epochs: usize,
    pub resample_reference: bool,
    pub max_velocity: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::regression()
    }
}

impl TrainConfig {
    /// Defaults for the simulated regression benchmarks.
    pub fn regression() -> Self {
        TrainConfig {
            lambda: 1.0,
            lambda_placement: LambdaPlacement::Match,
            rep_dim: 1,
            batch_size: 64,
            inner_loops: 1,
            outer_loops: 500,
            step_schedule: PiecewiseSchedule::new(vec![(0, 3.0), (151, 2.0), (226, 1.0)])
                .expect("static schedule"),
            divergence: FDivergence::Kl,
            rep_hidden: vec![16, 8],
            disc_hidden: vec![16],
            leaky_slope: 0.2,
            rep_optimizer: OptimizerConfig::default(),
            disc_optimizer: OptimizerConfig::default(),
            rep_lr_schedule: None,
            disc_epochs: 1,
            resample_reference: false,
            max_velocity: 10.0,
            seed: 0,
        }
    }

    /// Defaults for the simulated classification toys (2-D features).
    pub fn classification() -> Self {
        TrainConfig {
            rep_dim: 2,
            step_schedule: PiecewiseSchedule::new(vec![(0, 2.0), (151, 1.5), (226, 1.0)])
                .expect("static schedule"),
            rep_hidden: vec![100, 64, 32],
            disc_hidden: vec![64, 128, 64],
            ..TrainConfig::regression()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(DdrError::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size < 4 {
            return Err(DdrError::invalid(format!(
                "batch size must be at least 4, got {}",
                self.batch_size
            )));
        }
        if self.rep_dim == 0 {
            return Err(DdrError::invalid("representation dimension must be >= 1"));
        }
        if self.outer_loops == 0 {
            return Err(DdrError::invalid("outer_loops must be >= 1"));
        }
        if !(self.max_velocity > 0.0) {
            return Err(DdrError::invalid("max_velocity must be positive"));
        }
        Activation::leaky(self.leaky_slope)?;
        Ok(())
    }

    fn term_weights(&self) -> (f64, f64) {
        match self.lambda_placement {
            LambdaPlacement::Match => (1.0, self.lambda),
            LambdaPlacement::Dcov => (self.lambda, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch mean of `-dcov(R(X_b), Y_b)`.
    pub dcov_term: f64,
    /// Batch mean of `mean |R(X_b) - Z_b|^2`.
    pub match_term: f64,
    /// Last-pass logistic loss of the discriminator.
    pub disc_loss: f64,
    /// Batch mean of the weighted representer loss.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdrModel {
    pub representer: MlpNetwork,
    pub discriminator: MlpNetwork,
    pub config: TrainConfig,
    pub training_log: Vec<EpochRecord>,
}

fn build_representer(p: usize, cfg: &TrainConfig, seed: u64) -> Result<MlpNetwork> {
    let mut dims = vec![p];
    dims.extend_from_slice(&cfg.rep_hidden);
    dims.push(cfg.rep_dim);
    MlpNetwork::new(&dims, Activation::leaky(cfg.leaky_slope)?, seed)
}

/// Epoch-at-a-time training state.
#[derive(Clone, Debug)]
pub struct DdrTrainer {
    representer: MlpNetwork,
    discriminator: MlpNetwork,
    rep_opt: Optimizer,
    disc_opt: Optimizer,
    config: TrainConfig,
    x: Matrix,
    y: Matrix,
    w: Matrix,
    rng: DdrRng,
    log: Vec<EpochRecord>,
    dropped_warned: bool,
}

impl DdrTrainer {
    /// `y` is the response used by the dependence term (one-hot for classes).
    pub fn new(x: Matrix, y: Matrix, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if x.rows() != y.rows() {
            return Err(DdrError::dim("X and Y row counts differ"));
        }
        if x.rows() < config.batch_size {
            return Err(DdrError::InsufficientSamples {
                needed: config.batch_size,
                got: x.rows(),
            });
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(DdrError::numeric("training data contains non-finite values"));
        }
        let root = DdrRng::new(config.seed);
        let representer = build_representer(x.cols(), &config, root.fork(1).seed())?;
        let discriminator = build_discriminator(
            config.rep_dim,
            &config.disc_hidden,
            config.leaky_slope,
            root.fork(2).seed(),
        )?;
        let w = root.fork(3).normal_matrix(x.rows(), config.rep_dim);
        Ok(DdrTrainer {
            rep_opt: Optimizer::new(&config.rep_optimizer, &representer),
            disc_opt: Optimizer::new(&config.disc_optimizer, &discriminator),
            representer,
            discriminator,
            x,
            y,
            w,
            rng: root.fork(4),
            config,
            log: Vec::new(),
            dropped_warned: false,
        })
    }

    /// Continues training `model` on `(x, y)` until `config.outer_loops`
    /// epochs are logged. Optimizer moments start from zero.
    pub fn resume(model: DdrModel, x: Matrix, y: Matrix) -> Result<Self> {
        let mut t = DdrTrainer::new(x, y, model.config.clone())?;
        if model.representer.input_dim() != t.x.cols() {
            return Err(DdrError::dim(format!(
                "checkpoint expects {} features, data has {}",
                model.representer.input_dim(),
                t.x.cols()
            )));
        }
        let done = model.training_log.len() as u64;
        t.rep_opt = Optimizer::new(&t.config.rep_optimizer, &model.representer);
        t.disc_opt = Optimizer::new(&t.config.disc_optimizer, &model.discriminator);
        t.representer = model.representer;
        t.discriminator = model.discriminator;
        t.log = model.training_log;
        t.rng = DdrRng::new(t.config.seed).fork(1000 + done);
        Ok(t)
    }

    pub fn epochs_done(&self) -> usize {
        self.log.len()
    }

    pub fn representer(&self) -> &MlpNetwork {
        &self.representer
    }

    pub fn discriminator(&self) -> &MlpNetwork {
        &self.discriminator
    }

    pub fn log(&self) -> &[EpochRecord] {
        &self.log
    }

    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        self.representer.forward(x)
    }

    /// Runs one outer epoch and returns its log record.
    pub fn epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.log.len();
        let cfg = &self.config;
        let s = cfg.step_schedule.value_at(epoch);
        if let Some(lr) = &cfg.rep_lr_schedule {
            self.rep_opt.set_learning_rate(lr.value_at(epoch));
        }
        let n = self.x.rows();
        let mut z = self.representer.forward(&self.x)?;
        let mut disc_loss = f64::NAN;
        for _ in 0..cfg.inner_loops {
            if cfg.resample_reference {
                self.w = self.rng.normal_matrix(n, cfg.rep_dim);
            }
            disc_loss = fit_discriminator(
                &mut self.discriminator,
                &z,
                &self.w,
                &mut self.disc_opt,
                cfg.disc_epochs,
                cfg.batch_size,
                &mut self.rng,
            )
            .map_err(|e| DdrError::numeric(format!("epoch {epoch}: {e}")))?;
            let mut v = velocity_field(cfg.divergence, &self.discriminator, &z)?;
            clip_velocity(&mut v, cfg.max_velocity);
            z.add_scaled(s, &v)?;
        }
        if !z.is_finite() {
            return Err(DdrError::numeric(format!("epoch {epoch}: particles not finite")));
        }

        let (w_dcov, w_match) = cfg.term_weights();
        let perm = self.rng.permutation(n);
        let (mut sum_dcov, mut sum_match, mut sum_obj) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (b_idx, idx) in perm.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 4 {
                if !self.dropped_warned {
                    warn!("dropping trailing batch of {} rows (< 4)", idx.len());
                    self.dropped_warned = true;
                }
                continue;
            }
            let xb = self.x.select_rows(idx);
            let yb = self.y.select_rows(idx);
            let zb = z.select_rows(idx);
            let trace = self.representer.forward_trace(&xb)?;
            let out = trace.output();
            let (dcov, g_dcov) = dcov_value_and_gradient(out, &yb)?;
            let diff = out.sub(&zb)?;
            let b = idx.len() as f64;
            let match_term = diff.as_slice().iter().map(|v| v * v).sum::<f64>() / b;
            let loss = -w_dcov * dcov + w_match * match_term;
            if !loss.is_finite() {
                return Err(DdrError::numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b_idx}"
                )));
            }
            let mut grad = g_dcov.scale(-w_dcov);
            grad.add_scaled(2.0 * w_match / b, &diff)?;
            let (grads, _) = self.representer.backward_from(&trace, &grad)?;
            self.rep_opt
                .apply(&mut self.representer, &grads)
                .map_err(|e| DdrError::numeric(format!("epoch {epoch}, batch {b_idx}: {e}")))?;
            sum_dcov -= dcov;
            sum_match += match_term;
            sum_obj += loss;
            batches += 1;
        }
        let k = batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            dcov_term: sum_dcov / k,
            match_term: sum_match / k,
            disc_loss,
            objective: sum_obj / k,
        };
        self.log.push(record);
        Ok(record)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.log.len() < self.config.outer_loops {
            self.epoch()?;
        }
        Ok(())
    }

    pub fn into_model(self) -> DdrModel {
        DdrModel {
            representer: self.representer,
            discriminator: self.discriminator,
            config: self.config,
            training_log: self.log,
        }
    }
}

/// Trains on `(X, response)`; classification labels are one-hot encoded.
pub fn ddr_train(data: &Dataset, config: &TrainConfig) -> Result<DdrModel> {
    ddr_train_observed(data, config, |_, _| {})
}

/// As [`ddr_train`], calling `observe(record, trainer)` after every epoch.
pub fn ddr_train_observed(
    data: &Dataset,
    config: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord, &DdrTrainer),
) -> Result<DdrModel> {
    let mut trainer = DdrTrainer::new(data.x.clone(), data.response_matrix(), config.clone())?;
    for _ in 0..config.outer_loops {
        let rec = trainer.epoch()?;
        observe(&rec, &trainer);
    }
    Ok(trainer.into_model())
}

pub fn ddr_embed(model: &DdrModel, x: &Matrix) -> Result<Matrix> {
    model.representer.forward(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub dcov_term: f64,
    pub divergence_term: f64,
}

impl ObjectiveTerms {
    pub fn total(&self, lambda: f64) -> f64 {
        self.dcov_term + lambda * self.divergence_term
    }
}

/// Dual divergence estimate from a logistic-loss discriminator: the witness
/// is `f'(exp(-D))`, clamped into the conjugate's domain where needed.
pub fn divergence_estimate(
    div: FDivergence,
    disc: &MlpNetwork,
    z: &Matrix,
    w: &Matrix,
) -> Result<f64> {
    let witness = |m: &Matrix| -> Result<Vec<f64>> {
        Ok(disc
            .forward(m)?
            .as_slice()
            .iter()
            .map(|&d| div.clamp_witness(div.witness_from_log_ratio(d)).0)
            .collect())
    };
    variational_divergence(div, &witness(z)?, &witness(w)?)
}

/// `-dcov(z, y)` and the divergence estimate of `z` against `w` under `disc`.
pub fn objective_terms(
    div: FDivergence,
    disc: &MlpNetwork,
    z: &Matrix,
    y: &Matrix,
    w: &Matrix,
) -> Result<ObjectiveTerms> {
    if z.shape() != w.shape() {
        return Err(DdrError::dim("embedding and reference sample differ in shape"));
    }
    Ok(ObjectiveTerms {
        dcov_term: -dcov_u_fast(z, y)?,
        divergence_term: divergence_estimate(div, disc, z, w)?,
    })
}

/// Diagnostic objective of a trained model using its current discriminator.
pub fn objective_eval(model: &DdrModel, x: &Matrix, y: &Matrix, w: &Matrix) -> Result<ObjectiveTerms> {
    let z = ddr_embed(model, x)?;
    objective_terms(model.config.divergence, &model.discriminator, &z, y, w)
}

/// Objective of an arbitrary embedding `z` with a discriminator fitted afresh
/// on `(z, w)`, so different representations are scored on equal footing.
pub fn objective_with_refit(
    config: &TrainConfig,
    z: &Matrix,
    y: &Matrix,
    w: &Matrix,
    disc_epochs: usize,
    seed: u64,
) -> Result<ObjectiveTerms> {
    let root = DdrRng::new(seed);
    let mut disc = build_discriminator(
        z.cols(),
        &config.disc_hidden,
        config.leaky_slope,
        root.fork(1).seed(),
    )?;
    let mut opt = Optimizer::new(&config.disc_optimizer, &disc);
    let mut rng = root.fork(2);
    fit_discriminator(&mut disc, z, w, &mut opt, disc_epochs, config.batch_size, &mut rng)?;
    objective_terms(config.divergence, &disc, z, y, w)
}

pub fn training_log_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,dcov_term,match_term,disc_loss\n");
    for r in log {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.dcov_term, r.match_term, r.disc_loss);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar {
    config: TrainConfig,
    training_log: Vec<EpochRecord>,
}

impl DdrModel {
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        ddr_embed(self, x)
    }

    /// Network weights in the binary checkpoint format (representer first).
    pub fn weights_bytes(&self) -> Vec<u8> {
        write_networks(&[&self.representer, &self.discriminator])
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&ModelSidecar {
            config: self.config.clone(),
            training_log: self.training_log.clone(),
        })
        .expect("model metadata serialises")
    }

    pub fn from_parts(weights: &[u8], metadata_json: &str) -> Result<Self> {
        let mut nets = read_networks(weights)?;
        if nets.len() != 2 {
            return Err(DdrError::Checkpoint(format!(
                "expected 2 networks, found {}",
                nets.len()
            )));
        }
        let meta: ModelSidecar = serde_json::from_str(metadata_json)
            .map_err(|e| DdrError::Checkpoint(format!("metadata: {e}")))?;
        let discriminator = nets.pop().expect("two networks");
        let representer = nets.pop().expect("two networks");
        if representer.output_dim() != meta.config.rep_dim
            || discriminator.input_dim() != meta.config.rep_dim
        {
            return Err(DdrError::Checkpoint(
                "network shapes disagree with the stored config".into(),
            ));
        }
        Ok(DdrModel {
            representer,
            discriminator,
            config: meta.config,
            training_log: meta.training_log,
        })
    }

    /// Writes `<path>` (weights) and `<path>.json` (config and log).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.weights_bytes()).map_err(|e| DdrError::io(path, e))?;
        let meta = sidecar_path(path);
        fs::write(&meta, self.metadata_json()).map_err(|e| DdrError::io(&meta, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let weights = fs::read(path).map_err(|e| DdrError::io(path, e))?;
        let meta = sidecar_path(path);
        let json = fs::read_to_string(&meta).map_err(|e| DdrError::io(&meta, e))?;
        DdrModel::from_parts(&weights, &json)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{Provenance, Task};

    fn small_config() -> TrainConfig {
        TrainConfig {
            outer_loops: 3,
            batch_size: 16,
            rep_hidden: vec![8],
            disc_hidden: vec![8],
            ..TrainConfig::regression()
        }
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = DdrRng::new(seed);
        let x = rng.normal_matrix(n, 3);
        let y = Matrix::column_vector(&x.column(0));
        Dataset::new(x, y, Task::Regression, Provenance::default()).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::regression();
        c.batch_size = 3;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::regression();
        c.lambda = -1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::regression();
        c.outer_loops = 0;
        assert!(c.validate().is_err());
        assert!(TrainConfig::classification().validate().is_ok());
    }

    #[test]
    fn log_has_one_row_per_epoch_and_is_deterministic() {
        let ds = toy(100, 1);
        let a = ddr_train(&ds, &small_config()).unwrap();
        let b = ddr_train(&ds, &small_config()).unwrap();
        assert_eq!(a.training_log.len(), 3);
        assert_eq!(a, b);
        let csv = training_log_csv(&a.training_log);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,dcov_term,match_term,disc_loss\n"));
    }

    #[test]
    fn constant_response_moves_only_by_weight_decay() {
        let mut ds = toy(64, 2);
        ds.y = Matrix::filled(64, 1, 2.0);
        let cfg = TrainConfig {
            outer_loops: 1,
            lambda: 0.0,
            batch_size: 64,
            rep_optimizer: OptimizerConfig {
                kind: crate::nn::OptimizerKind::sgd(0.0, 0.1),
                learning_rate: 0.5,
            },
            ..small_config()
        };
        let init = DdrTrainer::new(ds.x.clone(), ds.y.clone(), cfg.clone()).unwrap();
        let before = init.representer().flat_parameters();
        let model = ddr_train(&ds, &cfg).unwrap();
        let after = model.representer.flat_parameters();
        for (a, b) in after.iter().zip(&before) {
            assert!((a - b * (1.0 - 0.5 * 0.1)).abs() < 1e-14);
        }
        assert_eq!(model.training_log[0].dcov_term, 0.0);
    }

    #[test]
    fn too_few_rows_rejected() {
        let ds = toy(10, 3);
        assert!(matches!(
            ddr_train(&ds, &small_config()),
            Err(DdrError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn small_trailing_batch_is_dropped() {
        let ds = toy(35, 4);
        let model = ddr_train(&ds, &small_config()).unwrap();
        assert!(model.training_log.iter().all(|r| r.objective.is_finite()));
    }

    #[test]
    fn embedding_shape_and_determinism() {
        let ds = toy(50, 5);
        let model = ddr_train(&ds, &small_config()).unwrap();
        let mut x = ds.x.clone();
        let r0 = x.row(0).to_vec();
        x.row_mut(1).copy_from_slice(&r0);
        let e = ddr_embed(&model, &x).unwrap();
        assert_eq!(e.shape(), (50, 1));
        assert_eq!(e.row(0), e.row(1));
        assert!(ddr_embed(&model, &Matrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn untrained_with_constant_y_has_zero_dcov_term() {
        let ds = toy(40, 6);
        let t = DdrTrainer::new(ds.x.clone(), ds.y.clone(), small_config()).unwrap();
        let model = t.into_model();
        let w = DdrRng::new(1).normal_matrix(40, 1);
        let terms = objective_eval(&model, &ds.x, &Matrix::filled(40, 1, 1.0), &w).unwrap();
        assert_eq!(terms.dcov_term, 0.0);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let ds = toy(40, 7);
        let model = ddr_train(&ds, &small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        model.save(&path).unwrap();
        assert_eq!(DdrModel::load(&path).unwrap(), model);
        fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(DdrModel::load(&path), Err(DdrError::Checkpoint(_))));
    }

    #[test]
    fn lambda_placement_swaps_weights() {
        let mut c = TrainConfig::regression();
        c.lambda = 0.3;
        assert_eq!(c.term_weights(), (1.0, 0.3));
        c.lambda_placement = LambdaPlacement::Dcov;
        assert_eq!(c.term_weights(), (0.3, 1.0));
    }
}

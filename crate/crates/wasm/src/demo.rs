//! Demo state machines, independent of the JavaScript bindings.

use std::str::FromStr;

use ddr_core::baselines::knn_classify;
use ddr_core::datagen::{gen_classification, kfold_split, standardize, Shape};
use ddr_core::dependence::dcorr;
use ddr_core::flow::{FlowConfig, ParticleFlow};
use ddr_core::rng::DdrRng;
use ddr_core::stats::mardia_skewness;
use ddr_core::trainer::{DdrTrainer, EpochRecord, TrainConfig};
use ddr_core::{DdrError, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    Shifted,
    Mixture,
    Ring,
}

impl FromStr for Start {
    type Err = DdrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted" => Ok(Start::Shifted),
            "mixture" => Ok(Start::Mixture),
            "ring" => Ok(Start::Ring),
            other => Err(DdrError::invalid(format!("unknown start '{other}'"))),
        }
    }
}

pub fn start_sample(start: Start, n: usize, seed: u64) -> Matrix {
    let mut rng = DdrRng::new(seed);
    let mut z = Matrix::zeros(n, 2);
    for i in 0..n {
        let (a, b) = match start {
            Start::Shifted => (3.0 + rng.standard_normal(), 3.0 + rng.standard_normal()),
            Start::Mixture => {
                let (c, sd) = if rng.uniform() < 0.6 { ([-1.5, -1.0], 0.6) } else { ([2.0, 1.5], 1.0) };
                (c[0] + sd * rng.standard_normal(), c[1] + sd * rng.standard_normal())
            }
            Start::Ring => {
                let t = rng.uniform_range(0.0, std::f64::consts::TAU);
                let r = 3.0 + 0.2 * rng.standard_normal();
                (r * t.cos(), r * t.sin())
            }
        };
        z[(i, 0)] = a;
        z[(i, 1)] = b;
    }
    z
}

/// Summary of a 2-D point cloud shown next to the plot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: [f64; 2],
    pub cov: [f64; 3],
    pub mardia: f64,
}

pub fn moments(z: &Matrix) -> Moments {
    let m = z.col_means();
    let c = z.covariance();
    Moments {
        mean: [m[0], m[1]],
        cov: [c[(0, 0)], c[(0, 1)], c[(1, 1)]],
        mardia: mardia_skewness(z).map_or(f64::NAN, |s| s.statistic),
    }
}

pub struct FlowSession {
    flow: ParticleFlow,
}

impl FlowSession {
    pub fn new(start: Start, n: usize, step_size: f64, seed: u64) -> Result<Self> {
        if n < 16 {
            return Err(DdrError::invalid("need at least 16 particles"));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(DdrError::invalid(format!("step size must be positive, got {step_size}")));
        }
        let schedule = ddr_core::nn::PiecewiseSchedule::constant(step_size);
        let config = FlowConfig {
            steps: usize::MAX,
            step_schedule: schedule,
            resample_reference: true,
            ..FlowConfig::default()
        };
        Ok(FlowSession {
            flow: ParticleFlow::new(start_sample(start, n, seed), config, seed)?,
        })
    }

    pub fn step(&mut self, k: usize) -> Result<()> {
        for _ in 0..k {
            self.flow.step()?;
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.flow.steps_taken()
    }

    pub fn particles(&self) -> &Matrix {
        self.flow.particles()
    }

    pub fn disc_loss(&self) -> f64 {
        self.flow.last_disc_loss
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Linear,
    Quadratic,
    Circle,
    Sine,
    Independent,
}

impl FromStr for Relation {
    type Err = DdrError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => Relation::Linear,
            "quadratic" => Relation::Quadratic,
            "circle" => Relation::Circle,
            "sine" => Relation::Sine,
            "independent" => Relation::Independent,
            other => return Err(DdrError::invalid(format!("unknown relation '{other}'"))),
        })
    }
}

pub struct DependenceSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dcorr: f64,
    pub pearson: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn dependence_sample(rel: Relation, n: usize, noise: f64, seed: u64) -> Result<DependenceSample> {
    if n < 4 {
        return Err(DdrError::InsufficientSamples { needed: 4, got: n });
    }
    let mut rng = DdrRng::new(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.uniform_range(-1.0, 1.0);
        let e = noise * rng.standard_normal();
        let (a, b) = match rel {
            Relation::Linear => (u, u + e),
            Relation::Quadratic => (u, u * u + e),
            Relation::Circle => {
                let t = std::f64::consts::PI * u;
                (t.cos() + e, t.sin() + noise * rng.standard_normal())
            }
            Relation::Sine => (u, (3.0 * std::f64::consts::PI * u).sin() + e),
            Relation::Independent => (u, rng.uniform_range(-1.0, 1.0)),
        };
        x.push(a);
        y.push(b);
    }
    let r = dcorr(&Matrix::column_vector(&x), &Matrix::column_vector(&y))?;
    let p = pearson(&x, &y);
    Ok(DependenceSample { x, y, dcorr: r, pearson: p })
}

/// DDR training on a projected toy classification set, one epoch at a time.
pub struct EmbedSession {
    trainer: DdrTrainer,
    train_x: Matrix,
    train_labels: Vec<usize>,
    test_x: Matrix,
    test_labels: Vec<usize>,
    last: Option<EpochRecord>,
}

impl EmbedSession {
    pub fn new(shape: Shape, n_per_class: usize, ambient_dim: usize, seed: u64) -> Result<Self> {
        let raw = gen_classification(shape, n_per_class, ambient_dim, 0.05, seed)?;
        let (ds, _) = standardize(&raw)?;
        let (tr, te) = kfold_split(ds.n(), 5, seed)?.split(0);
        let (train, test) = (ds.select_rows(&tr), ds.select_rows(&te));
        let config = TrainConfig {
            seed,
            ..TrainConfig::classification()
        };
        let trainer = DdrTrainer::new(train.x.clone(), train.response_matrix(), config)?;
        Ok(EmbedSession {
            trainer,
            train_labels: train.labels(),
            train_x: train.x,
            test_labels: test.labels(),
            test_x: test.x,
            last: None,
        })
    }

    pub fn epoch(&mut self) -> Result<EpochRecord> {
        let rec = self.trainer.epoch()?;
        self.last = Some(rec);
        Ok(rec)
    }

    pub fn epochs_done(&self) -> usize {
        self.trainer.epochs_done()
    }

    pub fn last_record(&self) -> Option<EpochRecord> {
        self.last
    }

    /// Test-set features (n x 2) and their labels.
    pub fn test_features(&self) -> Result<(Matrix, &[usize])> {
        Ok((self.trainer.embed(&self.test_x)?, &self.test_labels))
    }

    /// kNN(5) accuracy of the held-out points in the current feature space.
    pub fn test_accuracy(&self) -> Result<f64> {
        let f_train = self.trainer.embed(&self.train_x)?;
        let f_test = self.trainer.embed(&self.test_x)?;
        let pred = knn_classify(&f_train, &self.train_labels, &f_test, 5)?;
        ddr_core::baselines::accuracy(&self.test_labels, &pred)
    }
}

//! Particle Gaussianisation.
//!
//! Particles `Z` are pushed towards `N(0, I)` by residual maps
//! `z <- z + s v(z)` with `v(z) = -grad f'(r(z))`. The density ratio
//! `r = dmu/dgamma` is estimated by a discriminator trained on the logistic
//! loss against a reference Gaussian sample `W`, giving `r(z) = exp(-D(z))`.
//! For KL this reduces to `v(z) = grad D(z)`.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::divergence::{logistic_ratio_loss, FDivergence};
use crate::error::{DdrError, Result};
use crate::matrix::Matrix;
use crate::nn::{Activation, MlpNetwork, Optimizer, OptimizerConfig, PiecewiseSchedule};
use crate::rng::DdrRng;

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    pub z: Matrix,
    pub w: Matrix,
    pub step_size: f64,
}

impl ParticleState {
    pub fn new(z: Matrix, w: Matrix, step_size: f64) -> Result<Self> {
        if z.shape() != w.shape() {
            return Err(DdrError::dim(format!(
                "particles are {}x{} but reference sample is {}x{}",
                z.rows(),
                z.cols(),
                w.rows(),
                w.cols()
            )));
        }
        if !(step_size > 0.0) {
            return Err(DdrError::invalid(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        if !z.is_finite() || !w.is_finite() {
            return Err(DdrError::numeric("particle state contains non-finite values"));
        }
        Ok(ParticleState { z, w, step_size })
    }
}

/// Trains `disc` on the logistic ratio loss, `Z` labelled as the numerator.
///
/// Each epoch shuffles `Z` and `W` independently and walks paired minibatches;
/// a trailing partial batch is kept. Returns the mean loss of the last epoch
/// (`NaN` when `epochs == 0`).
pub fn fit_discriminator(
    disc: &mut MlpNetwork,
    z: &Matrix,
    w: &Matrix,
    opt: &mut Optimizer,
    epochs: usize,
    batch_size: usize,
    rng: &mut DdrRng,
) -> Result<f64> {
    if z.cols() != disc.input_dim() || disc.output_dim() != 1 {
        return Err(DdrError::dim(format!(
            "discriminator maps R^{} -> R^{}, particles live in R^{}",
            disc.input_dim(),
            disc.output_dim(),
            z.cols()
        )));
    }
    if z.shape() != w.shape() {
        return Err(DdrError::dim("particles and reference sample differ in shape"));
    }
    if batch_size == 0 {
        return Err(DdrError::invalid("batch size must be positive"));
    }
    let n = z.rows();
    let mut last = f64::NAN;
    let mut iteration = 0usize;
    for _ in 0..epochs {
        let pz = rng.permutation(n);
        let pw = rng.permutation(n);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (bz, bw) in pz.chunks(batch_size).zip(pw.chunks(batch_size)) {
            let b = bz.len();
            let mut stacked: Vec<usize> = Vec::with_capacity(2 * b);
            stacked.extend_from_slice(bz);
            let xb = {
                let zb = z.select_rows(&stacked);
                stacked.clear();
                stacked.extend_from_slice(bw);
                let wb = w.select_rows(&stacked);
                stack_rows(&zb, &wb)
            };
            let trace = disc.forward_trace(&xb)?;
            let out = trace.output().as_slice();
            let ll = logistic_ratio_loss(&out[..b], &out[b..])?;
            if !ll.loss.is_finite() {
                return Err(DdrError::numeric(format!(
                    "discriminator loss not finite at iteration {iteration}"
                )));
            }
            let mut g = ll.grad_on_z;
            g.extend(ll.grad_on_w);
            let grad_out = Matrix::from_vec(2 * b, 1, g)?;
            let (grads, _) = disc.backward_from(&trace, &grad_out)?;
            opt.apply(disc, &grads)
                .map_err(|e| DdrError::numeric(format!("iteration {iteration}: {e}")))?;
            total += ll.loss;
            batches += 1;
            iteration += 1;
        }
        last = total / batches.max(1) as f64;
    }
    Ok(last)
}

fn stack_rows(a: &Matrix, b: &Matrix) -> Matrix {
    let mut data = Vec::with_capacity((a.rows() + b.rows()) * a.cols());
    data.extend_from_slice(a.as_slice());
    data.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data).expect("same column count")
}

/// `f''(r) * r` written so it stays finite when `r = exp(-D)` under- or overflows.
fn velocity_factor(div: FDivergence, d: f64) -> f64 {
    match div {
        FDivergence::Kl => 1.0,
        // r / (r + 1) rewritten in terms of D
        FDivergence::Js => crate::divergence::sigmoid(d),
        FDivergence::Chi2 => 2.0 * (-d).min(700.0).exp(),
    }
}

/// `v(z) = -grad f'(r(z))` with `r(z) = exp(-D(z))`, i.e. `f''(r) r grad D`.
pub fn velocity_field(div: FDivergence, disc: &MlpNetwork, z: &Matrix) -> Result<Matrix> {
    if disc.output_dim() != 1 || disc.input_dim() != z.cols() {
        return Err(DdrError::dim("discriminator must map particles to scalars"));
    }
    let ones = Matrix::filled(z.rows(), 1, 1.0);
    let trace = disc.forward_trace(z)?;
    let (_, mut grad) = disc.backward_from(&trace, &ones)?;
    if div != FDivergence::Kl {
        let dvals = trace.output().as_slice();
        for (i, &d) in dvals.iter().enumerate() {
            let c = velocity_factor(div, d);
            grad.row_mut(i).iter_mut().for_each(|g| *g *= c);
        }
    }
    Ok(grad)
}

/// Rescales rows whose norm exceeds `max_norm`; returns how many were clipped.
pub fn clip_velocity(v: &mut Matrix, max_norm: f64) -> usize {
    let mut clipped = 0;
    for i in 0..v.rows() {
        let row = v.row_mut(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            row.iter_mut().for_each(|x| *x *= s);
            clipped += 1;
        }
    }
    clipped
}

/// `Z <- Z + s v`; `W` is untouched.
pub fn flow_step(state: &mut ParticleState, v: &Matrix) -> Result<()> {
    let mut next = state.z.clone();
    next.add_scaled(state.step_size, v)?;
    if !next.is_finite() {
        return Err(DdrError::numeric("particle update produced non-finite values"));
    }
    state.z = next;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub steps: usize,
    pub step_schedule: PiecewiseSchedule,
    pub divergence: FDivergence,
    /// Hidden widths of the discriminator `R^d -> R`.
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub disc_optimizer: OptimizerConfig,
    /// Discriminator passes over the particles per flow step.
    pub disc_epochs: usize,
    pub batch_size: usize,
    /// Draw a fresh reference sample every step instead of once up front.
    pub resample_reference: bool,
    pub max_velocity: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            steps: 200,
            step_schedule: PiecewiseSchedule::new(vec![(0, 1.0), (151, 2.0 / 3.0), (226, 1.0 / 3.0)])
                .expect("static schedule"),
            divergence: FDivergence::Kl,
            disc_hidden: vec![32],
            leaky_slope: 0.2,
            disc_optimizer: OptimizerConfig::default(),
            disc_epochs: 5,
            batch_size: 64,
            resample_reference: false,
            max_velocity: 10.0,
        }
    }
}

/// Fixed-topology discriminator `R^d -> R` with LeakyReLU hidden layers.
pub fn build_discriminator(
    dim: usize,
    hidden: &[usize],
    leaky_slope: f64,
    seed: u64,
) -> Result<MlpNetwork> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(dim);
    dims.extend_from_slice(hidden);
    dims.push(1);
    MlpNetwork::new(&dims, Activation::leaky(leaky_slope)?, seed)
}

/// Stateful flow: one [`ParticleFlow::step`] fits the discriminator, computes
/// the velocity field and moves the particles.
#[derive(Clone, Debug)]
pub struct ParticleFlow {
    pub state: ParticleState,
    pub disc: MlpNetwork,
    opt: Optimizer,
    config: FlowConfig,
    rng: DdrRng,
    step: usize,
    pub last_disc_loss: f64,
    pub clipped_total: usize,
}

impl ParticleFlow {
    pub fn new(z0: Matrix, config: FlowConfig, seed: u64) -> Result<Self> {
        let root = DdrRng::new(seed);
        let mut ref_rng = root.fork(1);
        let w = ref_rng.normal_matrix(z0.rows(), z0.cols());
        let s0 = config.step_schedule.value_at(0);
        let state = ParticleState::new(z0, w, if s0 > 0.0 { s0 } else { 1.0 })?;
        let disc = build_discriminator(
            state.z.cols(),
            &config.disc_hidden,
            config.leaky_slope,
            root.fork(2).seed(),
        )?;
        let opt = Optimizer::new(&config.disc_optimizer, &disc);
        Ok(ParticleFlow {
            state,
            disc,
            opt,
            rng: root.fork(3),
            config,
            step: 0,
            last_disc_loss: f64::NAN,
            clipped_total: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn particles(&self) -> &Matrix {
        &self.state.z
    }

    pub fn step(&mut self) -> Result<()> {
        let s = self.config.step_schedule.value_at(self.step);
        if !(s > 0.0) {
            return Err(DdrError::invalid(format!("step size {s} at step {}", self.step)));
        }
        self.state.step_size = s;
        if self.config.resample_reference {
            self.state.w = self.rng.normal_matrix(self.state.z.rows(), self.state.z.cols());
        }
        self.last_disc_loss = fit_discriminator(
            &mut self.disc,
            &self.state.z,
            &self.state.w,
            &mut self.opt,
            self.config.disc_epochs,
            self.config.batch_size,
            &mut self.rng,
        )
        .map_err(|e| DdrError::numeric(format!("flow step {}: {e}", self.step)))?;
        let mut v = velocity_field(self.config.divergence, &self.disc, &self.state.z)?;
        let clipped = clip_velocity(&mut v, self.config.max_velocity);
        if clipped > 0 {
            debug!("flow step {}: clipped {clipped} velocities", self.step);
            self.clipped_total += clipped;
        }
        flow_step(&mut self.state, &v)?;
        self.step += 1;
        Ok(())
    }
}

/// Runs `config.steps` flow iterations from `z0` and returns the final particles.
pub fn gaussianize(z0: &Matrix, config: &FlowConfig, seed: u64) -> Result<Matrix> {
    gaussianize_observed(z0, config, seed, |_, _| {})
}

/// As [`gaussianize`], calling `observe(step, particles)` before the first
/// step and after every step.
pub fn gaussianize_observed(
    z0: &Matrix,
    config: &FlowConfig,
    seed: u64,
    mut observe: impl FnMut(usize, &Matrix),
) -> Result<Matrix> {
    if config.steps == 0 {
        return Ok(z0.clone());
    }
    let mut flow = ParticleFlow::new(z0.clone(), config.clone(), seed)?;
    observe(0, flow.particles());
    for _ in 0..config.steps {
        flow.step()?;
        observe(flow.steps_taken(), flow.particles());
    }
    Ok(flow.state.z)
}

/// Particle snapshots as CSV: `step,particle,z1,...,zd`.
pub fn snapshots_csv(snapshots: &[(usize, Matrix)]) -> String {
    let d = snapshots.first().map_or(0, |s| s.1.cols());
    let mut out = String::from("step,particle");
    for k in 1..=d {
        out.push_str(&format!(",z{k}"));
    }
    out.push('\n');
    for (step, z) in snapshots {
        for (i, row) in z.row_iter().enumerate() {
            out.push_str(&format!("{step},{i}"));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

//! Oracles shared by the integration suites.

#![allow(dead_code)]

use ddr_core::dependence::{dcov_u_fast, dcov_value_and_gradient};
use ddr_core::divergence::FDivergence;
use ddr_core::flow::{build_discriminator, velocity_field};
use ddr_core::nn::{Activation, MlpNetwork};
use ddr_core::rng::DdrRng;
use ddr_core::Matrix;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a small floor so that near-zero derivatives are
/// compared on an absolute scale of 1e-3.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn central<F: FnMut(f64) -> f64>(mut f: F) -> f64 {
    (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP)
}

/// Random network (1 to 4 affine layers, widths 1 to 8) and input batch.
pub fn random_net(seed: u64) -> (MlpNetwork, Matrix) {
    let mut rng = DdrRng::new(seed);
    let layers = 1 + rng.index(4);
    let dims: Vec<usize> = (0..=layers).map(|_| 1 + rng.index(8)).collect();
    let act = match rng.index(3) {
        0 => Activation::Relu,
        1 => Activation::leaky(0.2).unwrap(),
        _ => Activation::Identity,
    };
    let net = MlpNetwork::new(&dims, act, rng.fork(1).seed()).unwrap();
    let n = 1 + rng.index(8);
    let x = rng.normal_matrix(n, dims[0]);
    (net, x)
}

/// Loss `sum(G * out) + 0.5 * sum(out^2)`, so `dL/dout = G + out`.
fn loss(net: &MlpNetwork, x: &Matrix, g: &Matrix) -> f64 {
    let out = net.forward(x).unwrap();
    out.as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(o, gi)| gi * o + 0.5 * o * o)
        .sum()
}

fn net_gradient_error(net: &MlpNetwork, x: &Matrix, g: &Matrix) -> f64 {
    let out = net.forward(x).unwrap();
    let mut grad_out = g.clone();
    grad_out.add_scaled(1.0, &out).unwrap();
    let (grads, dx) = net.backward(x, &grad_out).unwrap();

    let mut worst: f64 = 0.0;
    let params = net.flat_parameters();
    for (k, a) in grads.flatten().into_iter().enumerate() {
        let fd = central(|h| {
            let mut p = params.clone();
            p[k] += h;
            let mut m = net.clone();
            m.set_flat_parameters(&p).unwrap();
            loss(&m, x, g)
        });
        worst = worst.max(rel_err(a, fd));
    }
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let fd = central(|h| {
                let mut xp = x.clone();
                xp[(i, j)] += h;
                loss(net, &xp, g)
            });
            worst = worst.max(rel_err(dx[(i, j)], fd));
        }
    }
    worst
}

/// Largest relative error over all parameter and input derivatives.
pub fn mlp_gradient_error(seed: u64) -> f64 {
    let (net, x) = random_net(seed);
    let g = DdrRng::new(seed).fork(2).normal_matrix(x.rows(), net.output_dim());
    net_gradient_error(&net, &x, &g)
}

/// The documented `[3, 4, 2]`, n = 5 instance.
pub fn mlp_documented_error() -> f64 {
    let net = MlpNetwork::new(&[3, 4, 2], Activation::leaky(0.2).unwrap(), 17).unwrap();
    let x = DdrRng::new(18).normal_matrix(5, 3);
    let g = DdrRng::new(19).normal_matrix(5, 2);
    net_gradient_error(&net, &x, &g)
}

/// n = 12, d = 2, q = 1 seeded instance.
pub fn dcov_gradient_error(seed: u64) -> f64 {
    let mut rng = DdrRng::new(seed);
    let z = rng.normal_matrix(12, 2);
    let y = rng.normal_matrix(12, 1);
    let (_, grad) = dcov_value_and_gradient(&z, &y).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..12 {
        for j in 0..2 {
            let fd = central(|h| {
                let mut zp = z.clone();
                zp[(i, j)] += h;
                dcov_u_fast(&zp, &y).unwrap()
            });
            worst = worst.max(rel_err(grad[(i, j)], fd));
        }
    }
    worst
}

/// Velocity against finite differences of `-f'(exp(-D(z)))`, n = 6, d = 2.
pub fn velocity_error(div: FDivergence, seed: u64) -> f64 {
    let disc = build_discriminator(2, &[8], 0.2, seed).unwrap();
    let z = DdrRng::new(seed).fork(3).normal_matrix(6, 2);
    let v = velocity_field(div, &disc, &z).unwrap();
    let potential = |zp: &Matrix, i: usize| {
        let d = disc.forward(zp).unwrap()[(i, 0)];
        -div.f_prime((-d).exp()).unwrap()
    };
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        for j in 0..2 {
            let fd = central(|h| {
                let mut zp = z.clone();
                zp[(i, j)] += h;
                potential(&zp, i)
            });
            // v = -grad f'(r), and the potential is already -f'(r)
            worst = worst.max(rel_err(v[(i, j)], fd));
        }
    }
    worst
}

fn first_axis_cos(directions: &Matrix) -> f64 {
    let col = directions.column(0);
    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    (col[0] / norm).abs()
}

/// `Y = X e1 + eps`, n = 2000, p = 10: |cos(SIR direction, e1)|.
pub fn sir_single_index_cos(seed: u64) -> f64 {
    let mut rng = DdrRng::new(seed);
    let x = rng.normal_matrix(2000, 10);
    let y: Vec<f64> = (0..2000).map(|i| x[(i, 0)] + 0.5 * rng.standard_normal()).collect();
    let sir = ddr_core::baselines::fit_sir(&x, &y, 1, 10).unwrap();
    first_axis_cos(&sir.directions)
}

/// `Y = X1^2 + eps`, n = 2000, p = 10: (SAVE |cos| with e1, SIR top eigenvalue).
pub fn symmetric_link(seed: u64) -> (f64, f64) {
    let mut rng = DdrRng::new(seed);
    let x = rng.normal_matrix(2000, 10);
    let y: Vec<f64> = (0..2000).map(|i| x[(i, 0)].powi(2) + 0.2 * rng.standard_normal()).collect();
    let save = ddr_core::baselines::fit_save(&x, &y, 1, 10).unwrap();
    let sir = ddr_core::baselines::fit_sir(&x, &y, 1, 10).unwrap();
    (first_axis_cos(&save.directions), sir.eigenvalues[0])
}

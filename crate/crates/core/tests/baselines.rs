mod common;

use ddr_core::baselines::*;
use ddr_core::dependence::dcorr;
use ddr_core::rng::DdrRng;
use ddr_core::Matrix;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (ddr_core::stats::mean(a), ddr_core::stats::mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[test]
fn sir_finds_single_index() {
    for seed in 0..3 {
        let c = common::sir_single_index_cos(seed);
        assert!(c >= 0.95, "seed {seed}: cos {c}");
    }
}

#[test]
fn save_finds_symmetric_link_that_sir_misses() {
    for seed in 0..3 {
        let (save_cos, sir_top) = common::symmetric_link(seed);
        assert!(save_cos >= 0.9, "seed {seed}: SAVE cos {save_cos}");
        assert!(sir_top <= 0.1, "seed {seed}: SIR top eigenvalue {sir_top}");
    }
}

#[test]
fn null_case_spectra_are_small() {
    let mut rng = DdrRng::new(30);
    let x = rng.normal_matrix(2000, 10);
    let y: Vec<f64> = (0..2000).map(|_| rng.standard_normal()).collect();
    let sir = fit_sir(&x, &y, 1, 10).unwrap();
    assert!(sir.eigenvalues[0] <= 0.1, "SIR {}", sir.eigenvalues[0]);
    let save = fit_save(&x, &y, 1, 10).unwrap();
    assert!(save.eigenvalues[0] <= 0.15, "SAVE {}", save.eigenvalues[0]);
}

#[test]
fn sir_is_affine_equivariant() {
    let mut rng = DdrRng::new(31);
    let x = rng.normal_matrix(1500, 4);
    let y: Vec<f64> = (0..1500)
        .map(|i| (x[(i, 0)] + 0.5 * x[(i, 1)]).tanh() + 0.1 * rng.standard_normal())
        .collect();
    let a = Matrix::from_rows(&[
        [2.0, 0.3, 0.0, -1.0],
        [0.0, 1.0, 0.5, 0.0],
        [0.1, 0.0, 3.0, 0.2],
        [0.0, -0.4, 0.0, 0.7],
    ])
    .unwrap();
    let xa = Matrix::from_fn(1500, 4, |i, j| {
        (0..4).map(|k| x[(i, k)] * a[(k, j)]).sum::<f64>() + 5.0
    });
    let f = fit_sir(&x, &y, 1, 8).unwrap().transform(&x).unwrap().column(0);
    let g = fit_sir(&xa, &y, 1, 8).unwrap().transform(&xa).unwrap().column(0);
    assert!(pearson(&f, &g).abs() >= 1.0 - 1e-8);
}

#[test]
fn pca_isotropic_spectrum_is_flat() {
    let x = DdrRng::new(32).normal_matrix(5000, 3);
    let pca = fit_pca(&x, 3).unwrap();
    let e = &pca.eigenvalues;
    let spread = (e[0] - e[2]) / ddr_core::stats::mean(e);
    assert!(spread <= 0.15, "spread {spread}");
}

#[test]
fn ols_reaches_noise_floor_and_ignores_reparametrisation() {
    let sigma = 0.3;
    let mut rng = DdrRng::new(33);
    let make = |rng: &mut DdrRng| {
        let f = rng.normal_matrix(2000, 3);
        let y: Vec<f64> = (0..2000)
            .map(|i| 1.0 + 2.0 * f[(i, 0)] - f[(i, 2)] + sigma * rng.standard_normal())
            .collect();
        (f, y)
    };
    let (ftr, ytr) = make(&mut rng);
    let (fte, yte) = make(&mut rng);
    let pred = ols_fit_predict(&ftr, &ytr, &fte).unwrap();
    let mse = prediction_error(&yte, &pred).unwrap();
    assert!((mse / (sigma * sigma) - 1.0).abs() <= 0.1, "mse {mse}");

    let reparam = |f: &Matrix| Matrix::from_fn(f.rows(), 3, |i, j| 3.0 * f[(i, j)] - f[(i, (j + 1) % 3)] + 7.0);
    let pred2 = ols_fit_predict(&reparam(&ftr), &ytr, &reparam(&fte)).unwrap();
    for (a, b) in pred.iter().zip(&pred2) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn one_nn_recalls_training_labels() {
    let f = DdrRng::new(34).normal_matrix(200, 3);
    let labels: Vec<usize> = (0..200).map(|i| i % 4).collect();
    let pred = knn_classify(&f, &labels, &f, 1).unwrap();
    assert_eq!(accuracy(&labels, &pred).unwrap(), 1.0);
}

#[test]
fn sir_directions_carry_the_dependence() {
    let mut rng = DdrRng::new(35);
    let x = rng.normal_matrix(1000, 6);
    let y = Matrix::column_vector(
        &(0..1000).map(|i| x[(i, 2)] + 0.2 * rng.standard_normal()).collect::<Vec<_>>(),
    );
    let sir = fit_sir(&x, &y.column(0), 1, 10).unwrap();
    let sub: Vec<usize> = (0..500).collect();
    let feat = sir.transform(&x).unwrap().select_rows(&sub);
    assert!(dcorr(&feat, &y.select_rows(&sub)).unwrap() > 0.85);
}

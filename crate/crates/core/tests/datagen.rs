use ddr_core::baselines::sym_eig;
use ddr_core::datagen::*;
use ddr_core::stats::{mean, sample_variance};

#[test]
fn model_b_noise_variance() {
    let ds = gen_regression1(Reg1Model::B, 10_000, 0.1, 21).unwrap();
    let resid: Vec<f64> = (0..ds.n())
        .map(|i| ds.y[(i, 0)] - regression1_mean(Reg1Model::B, ds.x.row(i)))
        .collect();
    let v = sample_variance(&resid);
    assert!((0.008..=0.012).contains(&v), "residual variance {v}");
}

#[test]
fn model_b_noiseless_is_bounded() {
    let ds = gen_regression1(Reg1Model::B, 2000, 0.0, 2).unwrap();
    assert!(ds.y.as_slice().iter().all(|y| (0.0..=1.0).contains(y)));
    assert!(ds.x.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn scenario_iii_equicorrelation() {
    let ds = gen_regression2(Reg2Model::A, Scenario::Iii, 5000, 3).unwrap();
    let c = ds.x.covariance();
    let p = ds.x.cols();
    for i in 0..p {
        assert!((c[(i, i)] - 1.0).abs() < 0.08, "var {i} = {}", c[(i, i)]);
        for j in (i + 1)..p {
            let r = c[(i, j)] / (c[(i, i)] * c[(j, j)]).sqrt();
            assert!((r - 0.7).abs() <= 0.05, "corr({i},{j}) = {r}");
        }
    }
}

#[test]
fn scenario_ii_is_centred() {
    let ds = gen_regression2(Reg2Model::B, Scenario::Ii, 5000, 4).unwrap();
    for (j, m) in ds.x.col_means().into_iter().enumerate() {
        assert!(m.abs() <= 0.1, "column {j} mean {m}");
    }
}

#[test]
fn scenario_noise_has_quarter_variance() {
    let ds = gen_regression2(Reg2Model::C, Scenario::I, 20_000, 5).unwrap();
    let resid: Vec<f64> = (0..ds.n())
        .map(|i| ds.y[(i, 0)] - regression2_mean(Reg2Model::C, ds.x.row(i)))
        .collect();
    assert!(mean(&resid).abs() < 0.02);
    assert!((sample_variance(&resid) - 0.25).abs() < 0.015);
}

#[test]
fn projections_have_full_row_rank() {
    for shape in [Shape::Circles, Shape::Moons, Shape::Gauss3d6] {
        for seed in 0..10 {
            let (_, _, p) = gen_classification_parts(shape, 10, 100, 0.05, seed).unwrap();
            let gram = p.matmul_transposed(&p).unwrap();
            let (vals, _) = sym_eig(&gram).unwrap();
            let smallest = vals.last().unwrap().max(0.0).sqrt();
            assert!(smallest >= 1e-8, "{shape} seed {seed}: sigma_min {smallest}");
        }
    }
}

#[test]
fn classification_labels_balanced() {
    let ds = gen_classification(Shape::Gauss3d6, 40, 100, 0.05, 1).unwrap();
    assert_eq!(ds.x.shape(), (240, 100));
    assert_eq!(ds.num_classes(), 6);
    let labels = ds.labels();
    for c in 0..6 {
        assert_eq!(labels.iter().filter(|&&l| l == c).count(), 40);
    }
}

#[test]
fn test_fold_reuses_training_statistics() {
    let ds = gen_regression1(Reg1Model::A, 1000, 0.4, 8).unwrap();
    let (tr, te) = kfold_split(ds.n(), 5, 8).unwrap().split(0);
    let (train, test) = (ds.select_rows(&tr), ds.select_rows(&te));
    let (_, scaler) = standardize(&train).unwrap();
    let reused = scaler.apply(&test).unwrap();
    let (own, _) = standardize(&test).unwrap();
    assert_ne!(reused.x, own.x);
    // the reused transform is exactly the training affine map
    let j = 3;
    let expect = (test.x[(0, j)] - scaler.x_mean[j]) / scaler.x_scale[j];
    assert_eq!(reused.x[(0, j)], expect);
}

#[test]
fn folds_partition_rows() {
    let plan = kfold_split(103, 5, 2).unwrap();
    let mut seen = vec![0usize; 103];
    for f in 0..5 {
        let (tr, te) = plan.split(f);
        assert_eq!(tr.len() + te.len(), 103);
        te.iter().for_each(|&i| seen[i] += 1);
    }
    assert!(seen.iter().all(|&c| c == 1));
    let s = plan.fold_sizes();
    assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
}

#[test]
fn csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gen_classification(Shape::Moons, 5, 4, 0.05, 3).unwrap();
    let path = dir.path().join("m.csv");
    save_csv(&ds, &path).unwrap();
    let back = load_csv(&path, &[4], true, Task::Classification).unwrap();
    assert_eq!(back.x, ds.x);
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.feature_names.unwrap()[0], "x1");
}

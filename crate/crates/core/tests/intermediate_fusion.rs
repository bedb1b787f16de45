//! Intermediate fusion end to end: the projection gradient path against
//! finite differences, and the constructed two-source task where the
//! label is an XOR across sources, so neither source alone can solve it.

use fei3d::cli::{self, RunConfig};
use fei3d::data::{
    save_features, save_param_dataset_csv, FeatureSet, LabelSpace, ParamDataset, ParamKind,
};
use fei3d::fusion::{build_intermediate, fit_intermediate, IntermediateSplit};
use fei3d::losses::mse_loss;
use fei3d::nn::{build_classifier_with, HeadKind, MlpConfig, Mode};
use fei3d::numerics::{Matrix, RngState};
use fei3d::training::{fit, LossSpec, TrainConfig};

fn tiny_mlp_config(width: usize) -> MlpConfig {
    MlpConfig {
        hidden_width: width,
        dropout: (0.0, 0.0),
        ..Default::default()
    }
}

#[test]
fn projection_gradients_match_finite_differences() {
    let mut fm = build_intermediate(
        3,
        4,
        5,
        HeadKind::Custom(2),
        &tiny_mlp_config(6),
        RngState::seed(17),
    )
    .unwrap();
    let mut rng = RngState::seed(18);
    let mut draw = |r: usize, c: usize| {
        let data = (0..r * c).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
        Matrix::from_vec(r, c, data).unwrap()
    };
    let f2 = draw(5, 3);
    let f3 = draw(5, 4);
    let target = draw(5, 2);

    fm.zero_grads();
    let out = fm.forward(&f2, &f3, Mode::Train).unwrap();
    let (_, grad_out) = mse_loss(&out, &target).unwrap();
    fm.backprop(&grad_out).unwrap();
    // the first two trainable groups are the projection weights and bias
    let analytic: Vec<Vec<f64>> = fm
        .trainable_mut()
        .into_iter()
        .take(2)
        .map(|(_, g)| g.to_vec())
        .collect();

    let h = 1e-5;
    for (p, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let orig = {
                let pairs = fm.trainable_mut();
                pairs[p].0[e]
            };
            let eval_at = |v: f64, fm: &mut fei3d::fusion::IntermediateFusionModel| {
                {
                    let mut pairs = fm.trainable_mut();
                    pairs[p].0[e] = v;
                }
                let out = fm.forward(&f2, &f3, Mode::Train).unwrap();
                mse_loss(&out, &target).unwrap().0
            };
            let plus = eval_at(orig + h, &mut fm);
            let minus = eval_at(orig - h, &mut fm);
            {
                let mut pairs = fm.trainable_mut();
                pairs[p].0[e] = orig;
            }
            let numeric = (plus - minus) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-8 {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / scale
            };
            assert!(err < 1e-5, "projection group {p} elem {e}: {a} vs {numeric}");
        }
    }
}

/// Two sources, each carrying one bit; the label is their XOR plus a
/// shared clean geometry, so a single-source classifier tops out near
/// chance while the fused model can separate all four combinations.
struct XorData {
    feat2d: FeatureSet,
    data3d: ParamDataset,
}

fn xor_data(n_per_combo: usize, seed: u64, tag: &str) -> XorData {
    let mut rng = RngState::seed(seed);
    let sigma = 0.3;
    let offset = 2.0;
    let mut ids = Vec::new();
    let mut f2 = Vec::new();
    let mut f3 = Vec::new();
    let mut labels = Vec::new();
    let mut i = 0;
    for bit_a in 0..2usize {
        for bit_b in 0..2usize {
            for _ in 0..n_per_combo {
                ids.push(format!("{tag}{i:05}"));
                let sign_a = if bit_a == 1 { offset } else { -offset };
                let sign_b = if bit_b == 1 { offset } else { -offset };
                f2.extend([
                    sign_a + sigma * rng.normal(),
                    sigma * rng.normal(),
                    sigma * rng.normal(),
                ]);
                f3.extend([
                    sign_b + sigma * rng.normal(),
                    sigma * rng.normal(),
                    sigma * rng.normal(),
                ]);
                labels.push(bit_a ^ bit_b);
                i += 1;
            }
        }
    }
    let n = ids.len();
    let feat2d = FeatureSet::new(
        "f2d".into(),
        ids.clone(),
        Matrix::from_vec(n, 3, f2).unwrap(),
    )
    .unwrap();
    let data3d = ParamDataset::new(
        ParamKind::Custom(3),
        LabelSpace::Raf7,
        ids,
        Matrix::from_vec(n, 3, f3).unwrap(),
        labels,
        vec![None; n],
    )
    .unwrap();
    XorData { feat2d, data3d }
}

fn fast_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        max_epochs: 25,
        max_lr: 1e-3,
        patience: 25,
        seed,
        ..Default::default()
    }
}

fn single_source_accuracy(
    features: &Matrix,
    labels: &[usize],
    val_features: &Matrix,
    val_labels: &[usize],
    seed: u64,
) -> f64 {
    let train = ParamDataset::new(
        ParamKind::Custom(3),
        LabelSpace::Raf7,
        (0..features.rows()).map(|i| format!("t{i}")).collect(),
        features.clone(),
        labels.to_vec(),
        vec![None; features.rows()],
    )
    .unwrap();
    let val = ParamDataset::new(
        ParamKind::Custom(3),
        LabelSpace::Raf7,
        (0..val_features.rows()).map(|i| format!("v{i}")).collect(),
        val_features.clone(),
        val_labels.to_vec(),
        vec![None; val_features.rows()],
    )
    .unwrap();
    let mut model = build_classifier_with(
        3,
        HeadKind::Custom(2),
        &tiny_mlp_config(16),
        RngState::seed(seed),
    )
    .unwrap();
    fit(&mut model, &train, &val, &LossSpec::CrossEntropy, &fast_config(seed)).unwrap();
    let pred = model.predict(&val.features, 1).unwrap();
    let probs = pred.probabilities.unwrap();
    let mut correct = 0;
    for (i, &l) in val.labels.iter().enumerate() {
        let arg = probs
            .row(i)
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap()
            .0;
        if arg == l {
            correct += 1;
        }
    }
    correct as f64 / val.labels.len() as f64
}

#[test]
fn xor_across_sources_needs_the_fusion() {
    let train = xor_data(100, 71, "tr");
    let val = xor_data(25, 72, "va");

    // fused model sees both sources
    let mut fm = build_intermediate(
        3,
        3,
        4,
        HeadKind::Custom(2),
        &tiny_mlp_config(16),
        RngState::seed(73),
    )
    .unwrap();
    fit_intermediate(
        &mut fm,
        &IntermediateSplit {
            feat2d: &train.feat2d,
            data3d: &train.data3d,
        },
        &IntermediateSplit {
            feat2d: &val.feat2d,
            data3d: &val.data3d,
        },
        &LossSpec::CrossEntropy,
        &fast_config(73),
    )
    .unwrap();
    let out = fm
        .forward_eval(&val.feat2d.features, &val.data3d.features)
        .unwrap();
    let mut correct = 0;
    for (i, &l) in val.data3d.labels.iter().enumerate() {
        let arg = out
            .row(i)
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap()
            .0;
        if arg == l {
            correct += 1;
        }
    }
    let fused_acc = correct as f64 / val.data3d.labels.len() as f64;

    let acc_2d = single_source_accuracy(
        &train.feat2d.features,
        &train.data3d.labels,
        &val.feat2d.features,
        &val.data3d.labels,
        74,
    );
    let acc_3d = single_source_accuracy(
        &train.data3d.features,
        &train.data3d.labels,
        &val.data3d.features,
        &val.data3d.labels,
        75,
    );

    assert!(
        fused_acc >= 0.95,
        "fusion should solve the XOR task, got {fused_acc}"
    );
    assert!(
        fused_acc > acc_2d && fused_acc > acc_3d,
        "fusion {fused_acc} must beat single sources {acc_2d} / {acc_3d}"
    );
    assert!(
        acc_2d < 0.7 && acc_3d < 0.7,
        "single sources should stay near chance on XOR: {acc_2d} / {acc_3d}"
    );
}

#[test]
fn train_intermediate_command_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let train = xor_data(40, 81, "tr");
    let val = xor_data(10, 82, "va");
    save_features(&train.feat2d, &dir.path().join("train_2d.csv")).unwrap();
    save_features(&val.feat2d, &dir.path().join("val_2d.csv")).unwrap();
    save_param_dataset_csv(&train.data3d, &dir.path().join("train_3d.csv")).unwrap();
    save_param_dataset_csv(&val.data3d, &dir.path().join("val_3d.csv")).unwrap();

    let mut cfg = cli::TrainIntermediateConfig {
        features2d: dir.path().join("train_2d.csv"),
        data: dir.path().join("train_3d.csv"),
        val_features2d: dir.path().join("val_2d.csv"),
        val_data: dir.path().join("val_3d.csv"),
        kind: "custom:3".into(),
        head: "custom:2".into(),
        loss: "ce".into(),
        proj_dim: 4,
        hidden_width: 12,
        out: dir.path().join("run"),
        ..Default::default()
    };
    cfg.train.batch_size = 16;
    cfg.train.max_epochs = 3;
    cfg.train.seed = 83;
    cli::execute(&RunConfig::TrainIntermediate(cfg)).unwrap();

    let out = dir.path().join("run");
    for artifact in ["config.json", "history.jsonl", "metrics.json", "report.txt", "model.ckpt", "predictions.csv"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    // the checkpoint reloads as an intermediate fusion model
    let (fm, _) = fei3d::fusion::load_intermediate_checkpoint(&out.join("model.ckpt")).unwrap();
    assert_eq!(fm.dim_2d(), 3);
    assert_eq!(fm.dim_3d(), 3);
    assert_eq!(fm.proj_dim(), 4);
}

//! Command bodies: each run echoes its resolved config into the output
//! directory first, then writes the fixed artifact layout
//! (`config.json`, `history.jsonl`, `metrics.json`, `report.txt`,
//! `model.ckpt`, `predictions.csv` - whichever apply).

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::data::{
    align, load_features, load_param_dataset, load_predictions,
    save_param_dataset_binary, save_param_dataset_csv, save_predictions_csv, synth_generate,
    FeatureSet, LabelSpace, ParamDataset, ParamKind, PredictionSet, SynthSpec, SynthVaSpec,
};
use crate::error::{Error, Result};
use crate::fusion::{
    build_intermediate, fit_intermediate, late_fuse_class, late_fuse_va,
    save_intermediate_checkpoint, sweep_fusion_weight, FusionStrategy, IntermediateSplit,
    SweepObjective, SweepTruth,
};
use crate::losses::{class_weights_from_counts, BatchTargets, LossKind, LossWeights, VaLossConfig};
use crate::metrics::{classification_report, regression_report, MetricsReport};
use crate::nn::{build_classifier_with, grad_check, HeadKind, MlpConfig, MlpModel};
use crate::numerics::{Matrix, RngState};
use crate::training::{
    fit, fit_two_stage_va, save_checkpoint, CheckpointMeta, EpochRecord, LossSpec,
};

use super::{
    effective_threads, DecodeMeshConfig, EvaluateConfig, FuseLateConfig, GradcheckConfig,
    RunConfig, SweepConfig, SynthConfig, Train3dConfig, TrainIntermediateConfig,
};

/// Runs a resolved configuration to completion, writing all artifacts.
pub fn execute(cfg: &RunConfig) -> Result<()> {
    match cfg {
        RunConfig::Train3d(c) => train_3d(cfg, c),
        RunConfig::TrainIntermediate(c) => train_intermediate(cfg, c),
        RunConfig::FuseLate(c) => fuse_late(cfg, c),
        RunConfig::Evaluate(c) => evaluate(cfg, c),
        RunConfig::Sweep(c) => sweep(cfg, c),
        RunConfig::Gradcheck(c) => gradcheck(cfg, c),
        RunConfig::Synth(c) => synth(cfg, c),
        RunConfig::DecodeMesh(c) => decode_mesh(cfg, c),
    }
}

fn echo_config(out_dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let text = serde_json::to_string_pretty(cfg)?;
    std::fs::write(out_dir.join("config.json"), text)?;
    Ok(())
}

fn write_metrics(out_dir: &Path, report: &MetricsReport, table_name: &str) -> Result<()> {
    std::fs::write(out_dir.join("metrics.json"), report.to_json_pretty())?;
    std::fs::write(out_dir.join("report.txt"), report.render_table(table_name))?;
    Ok(())
}

fn write_history(out_dir: &Path, stages: &[(usize, &[EpochRecord])]) -> Result<()> {
    let mut text = String::new();
    for (stage, records) in stages {
        for r in *records {
            let mut v = serde_json::to_value(r)?;
            if stages.len() > 1 {
                v["stage"] = json!(stage);
            }
            text.push_str(&serde_json::to_string(&v)?);
            text.push('\n');
        }
    }
    std::fs::write(out_dir.join("history.jsonl"), text)?;
    Ok(())
}

fn parse_head(spec: &str) -> Result<HeadKind> {
    match spec {
        "raf7" => Ok(HeadKind::RafDb7),
        "affect8va" => Ok(HeadKind::Affectnet8Va),
        "va2" => Ok(HeadKind::VaOnly2),
        other => {
            if let Some(n) = other.strip_prefix("custom:") {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid head width {n:?}")))?;
                Ok(HeadKind::Custom(n))
            } else {
                Err(Error::Config(format!(
                    "unknown head kind {other:?} (expected raf7, affect8va, va2, or custom:<n>)"
                )))
            }
        }
    }
}

fn parse_loss(spec: &str) -> Result<LossSpec> {
    match spec {
        "ce" => Ok(LossSpec::CrossEntropy),
        "wce" => Ok(LossSpec::WeightedCrossEntropy),
        "composite" => Ok(LossSpec::Composite),
        other => Err(Error::Config(format!(
            "unknown loss {other:?} (expected ce, wce, or composite)"
        ))),
    }
}

fn parse_strategy(kind: &str, w: f64) -> Result<FusionStrategy> {
    let s = match kind {
        "max" => FusionStrategy::Max,
        "min" => FusionStrategy::Min,
        "mean" => FusionStrategy::Mean,
        "weighted" => FusionStrategy::Weighted(w),
        other => {
            return Err(Error::Config(format!(
                "unknown fusion strategy {other:?} (expected max, min, mean, or weighted)"
            )))
        }
    };
    s.validate()?;
    Ok(s)
}

fn infer_head(two_stage: bool, loss: &str, space: LabelSpace) -> HeadKind {
    if two_stage || loss == "composite" {
        return HeadKind::Affectnet8Va;
    }
    match space {
        LabelSpace::Raf7 => HeadKind::RafDb7,
        LabelSpace::Affect8 => HeadKind::Custom(8),
    }
}

/// Evaluates a trained model on a dataset: argmax labels and/or clamped
/// VA, a prediction set, and the metric battery where targets allow.
fn model_eval_outputs(
    model: &MlpModel,
    ds: &ParamDataset,
    source: &str,
    threads: usize,
) -> Result<(PredictionSet, MetricsReport)> {
    let prediction = model.predict(&ds.features, threads)?;
    let ps = PredictionSet::new(
        source.to_string(),
        ds.ids.clone(),
        prediction.probabilities.clone(),
        prediction.va.clone(),
    )?;
    let mut report = MetricsReport::default();
    if let Some(probs) = &prediction.probabilities {
        let predicted = ps.predicted_labels()?;
        report.classification = Some(classification_report(
            &ds.labels,
            &predicted,
            probs.cols().max(ds.label_space.classes()),
        )?);
    }
    if let (Some(va), true) = (&prediction.va, ds.has_full_va()) {
        report.regression = Some(regression_report(va, &ds.va_matrix()?)?);
    }
    Ok((ps, report))
}

fn train_3d(run: &RunConfig, c: &Train3dConfig) -> Result<()> {
    echo_config(&c.out, run)?;
    let kind = ParamKind::parse(&c.kind)?;
    let train_ds = load_param_dataset(&c.data, kind)?;
    let val_ds = load_param_dataset(&c.val, kind)?;
    let head = if c.head.is_empty() {
        infer_head(c.two_stage, &c.loss, train_ds.label_space)
    } else {
        parse_head(&c.head)?
    };
    let mcfg = MlpConfig {
        hidden_width: c.hidden_width,
        dropout: c.dropout,
        ..Default::default()
    };
    let mut model = build_classifier_with(
        train_ds.dim(),
        head,
        &mcfg,
        RngState::seed(c.train.seed),
    )?;

    let (stages, best_epoch, best_val_loss) = if c.two_stage {
        let report = fit_two_stage_va(&mut model, &train_ds, &val_ds, &c.train, &c.va)?;
        let best = (
            report.stage2.best_epoch.unwrap_or(0),
            report.stage2.best_val_loss,
        );
        (
            vec![(1usize, report.stage1.history), (2, report.stage2.history)],
            best.0,
            best.1,
        )
    } else {
        let report = fit(&mut model, &train_ds, &val_ds, &parse_loss(&c.loss)?, &c.train)?;
        (
            vec![(1usize, report.history)],
            report.best_epoch.unwrap_or(0),
            report.best_val_loss,
        )
    };

    let stage_refs: Vec<(usize, &[EpochRecord])> =
        stages.iter().map(|(s, h)| (*s, h.as_slice())).collect();
    write_history(&c.out, &stage_refs)?;
    save_checkpoint(
        &model,
        &CheckpointMeta {
            epoch: best_epoch,
            best_val_loss,
            seed: c.train.seed,
        },
        &c.out.join("model.ckpt"),
    )?;

    let threads = effective_threads(c.threads);
    let (predictions, report) = model_eval_outputs(&model, &val_ds, "train-3d", threads)?;
    save_predictions_csv(&predictions, &c.out.join("predictions.csv"))?;
    write_metrics(&c.out, &report, "train-3d")?;
    print_summary(&report);
    Ok(())
}

/// Inner-joins a feature set with a parameter dataset by id, reporting
/// dropped samples on stdout.
fn align_features_with_dataset(
    feat: &FeatureSet,
    ds: &ParamDataset,
    what: &str,
) -> Result<(FeatureSet, ParamDataset)> {
    let joined = align(&feat.ids, &ds.ids)?;
    if joined.dropped_a > 0 || joined.dropped_b > 0 {
        println!(
            "{what}: joined {} samples (dropped {} feature rows, {} dataset rows)",
            joined.pairs.len(),
            joined.dropped_a,
            joined.dropped_b
        );
    }
    let fi: Vec<usize> = joined.pairs.iter().map(|(a, _)| *a).collect();
    let di: Vec<usize> = joined.pairs.iter().map(|(_, b)| *b).collect();
    Ok((feat.take(&fi), take_dataset(ds, &di)?))
}

fn take_dataset(ds: &ParamDataset, indices: &[usize]) -> Result<ParamDataset> {
    ParamDataset::new(
        ds.kind,
        ds.label_space,
        indices.iter().map(|&i| ds.ids[i].clone()).collect(),
        ds.features.take_rows(indices),
        indices.iter().map(|&i| ds.labels[i]).collect(),
        indices.iter().map(|&i| ds.va[i]).collect(),
    )
}

fn train_intermediate(run: &RunConfig, c: &TrainIntermediateConfig) -> Result<()> {
    echo_config(&c.out, run)?;
    let kind = ParamKind::parse(&c.kind)?;
    let train_feat = load_features(&c.features2d)?;
    let train_ds = load_param_dataset(&c.data, kind)?;
    let val_feat = load_features(&c.val_features2d)?;
    let val_ds = load_param_dataset(&c.val_data, kind)?;
    let (train_feat, train_ds) = align_features_with_dataset(&train_feat, &train_ds, "train")?;
    let (val_feat, val_ds) = align_features_with_dataset(&val_feat, &val_ds, "val")?;

    let head = if c.head.is_empty() {
        infer_head(false, &c.loss, train_ds.label_space)
    } else {
        parse_head(&c.head)?
    };
    let mcfg = MlpConfig {
        hidden_width: c.hidden_width,
        dropout: c.dropout,
        ..Default::default()
    };
    let mut model = build_intermediate(
        train_feat.dim(),
        train_ds.dim(),
        c.proj_dim,
        head,
        &mcfg,
        RngState::seed(c.train.seed),
    )?;
    let report = fit_intermediate(
        &mut model,
        &IntermediateSplit {
            feat2d: &train_feat,
            data3d: &train_ds,
        },
        &IntermediateSplit {
            feat2d: &val_feat,
            data3d: &val_ds,
        },
        &parse_loss(&c.loss)?,
        &c.train,
    )?;

    write_history(&c.out, &[(1, report.history.as_slice())])?;
    save_intermediate_checkpoint(
        &model,
        &CheckpointMeta {
            epoch: report.best_epoch.unwrap_or(0),
            best_val_loss: report.best_val_loss,
            seed: c.train.seed,
        },
        &c.out.join("model.ckpt"),
    )?;

    let out = model.forward_eval(&val_feat.features, &val_ds.features)?;
    let classes = head.class_count();
    let (probs, va) = match head {
        HeadKind::VaOnly2 => (None, Some(clamp_va(&out))),
        HeadKind::Affectnet8Va => {
            let (logits, va) = out.split_cols(classes)?;
            (Some(crate::losses::softmax_rows(&logits)), Some(clamp_va(&va)))
        }
        _ => (Some(crate::losses::softmax_rows(&out)), None),
    };
    let predictions = PredictionSet::new("train-intermediate".into(), val_ds.ids.clone(), probs, va)?;
    save_predictions_csv(&predictions, &c.out.join("predictions.csv"))?;

    let mut metrics = MetricsReport::default();
    if let Some(p) = &predictions.probs {
        metrics.classification = Some(classification_report(
            &val_ds.labels,
            &predictions.predicted_labels()?,
            p.cols().max(val_ds.label_space.classes()),
        )?);
    }
    if let (Some(v), true) = (&predictions.va, val_ds.has_full_va()) {
        metrics.regression = Some(regression_report(v, &val_ds.va_matrix()?)?);
    }
    write_metrics(&c.out, &metrics, "train-intermediate")?;
    print_summary(&metrics);
    Ok(())
}

fn clamp_va(v: &Matrix) -> Matrix {
    let mut out = v.clone();
    for x in out.data_mut() {
        *x = x.clamp(-1.0, 1.0);
    }
    out
}

/// Restricts two prediction sets (and optionally a labels dataset) to
/// their common ids, in the first set's order.
fn align_prediction_pair(
    a: &PredictionSet,
    b: &PredictionSet,
    labels: Option<&ParamDataset>,
) -> Result<(PredictionSet, PredictionSet, Option<ParamDataset>)> {
    let ab = align(&a.ids, &b.ids)?;
    let ai: Vec<usize> = ab.pairs.iter().map(|(x, _)| *x).collect();
    let bi: Vec<usize> = ab.pairs.iter().map(|(_, y)| *y).collect();
    let mut a2 = a.take(&ai);
    let mut b2 = b.take(&bi);
    let ds = match labels {
        None => None,
        Some(ds) => {
            let with_ds = align(&a2.ids, &ds.ids)?;
            let pi: Vec<usize> = with_ds.pairs.iter().map(|(x, _)| *x).collect();
            let di: Vec<usize> = with_ds.pairs.iter().map(|(_, y)| *y).collect();
            a2 = a2.take(&pi);
            b2 = b2.take(&pi);
            Some(take_dataset(ds, &di)?)
        }
    };
    Ok((a2, b2, ds))
}

fn fuse_late(run: &RunConfig, c: &FuseLateConfig) -> Result<()> {
    echo_config(&c.out, run)?;
    let a = load_predictions(&c.a, c.from_logits_a)?;
    let b = load_predictions(&c.b, c.from_logits_b)?;
    let labels = match &c.labels {
        Some(path) => Some(load_param_dataset(path, ParamKind::parse(&c.kind)?)?),
        None => None,
    };
    let (a, b, labels) = align_prediction_pair(&a, &b, labels.as_ref())?;
    let strategy = parse_strategy(&c.strategy, c.w)?;

    let fused_probs = match (&a.probs, &b.probs) {
        (Some(pa), Some(pb)) => Some(late_fuse_class(pa, pb, &strategy)?),
        _ => None,
    };
    let fused_va = match (&a.va, &b.va) {
        (Some(va), Some(vb)) => Some(late_fuse_va(va, vb, &strategy)?),
        _ => None,
    };
    if fused_probs.is_none() && fused_va.is_none() {
        return Err(Error::Data(
            "the two prediction sets share no payload to fuse (need probabilities or va on both)"
                .into(),
        ));
    }
    let fused = PredictionSet::new("fuse-late".into(), a.ids.clone(), fused_probs, fused_va)?;
    save_predictions_csv(&fused, &c.out.join("predictions.csv"))?;

    let mut metrics = MetricsReport::default();
    if let Some(ds) = &labels {
        if let Some(p) = &fused.probs {
            metrics.classification = Some(classification_report(
                &ds.labels,
                &fused.predicted_labels()?,
                p.cols().max(ds.label_space.classes()),
            )?);
        }
        if let (Some(v), true) = (&fused.va, ds.has_full_va()) {
            metrics.regression = Some(regression_report(v, &ds.va_matrix()?)?);
        }
    }
    write_metrics(&c.out, &metrics, "fuse-late")?;
    print_summary(&metrics);
    Ok(())
}

fn evaluate(run: &RunConfig, c: &EvaluateConfig) -> Result<()> {
    echo_config(&c.out, run)?;
    let pred = load_predictions(&c.pred, c.from_logits)?;
    let ds = load_param_dataset(&c.labels, ParamKind::parse(&c.kind)?)?;
    let joined = align(&pred.ids, &ds.ids)?;
    let pi: Vec<usize> = joined.pairs.iter().map(|(x, _)| *x).collect();
    let di: Vec<usize> = joined.pairs.iter().map(|(_, y)| *y).collect();
    let pred = pred.take(&pi);
    let ds = take_dataset(&ds, &di)?;

    let mut metrics = MetricsReport::default();
    if let Some(p) = &pred.probs {
        metrics.classification = Some(classification_report(
            &ds.labels,
            &pred.predicted_labels()?,
            p.cols().max(ds.label_space.classes()),
        )?);
    }
    if let (Some(v), true) = (&pred.va, ds.has_full_va()) {
        metrics.regression = Some(regression_report(v, &ds.va_matrix()?)?);
    }
    if metrics.classification.is_none() && metrics.regression.is_none() {
        return Err(Error::Data(
            "nothing to evaluate: predictions carry no payload matching the labels file".into(),
        ));
    }
    write_metrics(&c.out, &metrics, "evaluate")?;
    print_summary(&metrics);
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parse_one = |tok: &str| -> Result<f64> {
        tok.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("invalid grid value {tok:?}")))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "grid {spec:?} must be start:end:step or a comma-separated list"
            )));
        }
        let (start, end, step) = (parse_one(parts[0])?, parse_one(parts[1])?, parse_one(parts[2])?);
        if step.is_nan() || step <= 0.0 {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        let mut grid = Vec::new();
        let n = ((end - start) / step).round() as i64;
        for i in 0..=n.max(0) {
            let w = start + step * i as f64;
            if w <= end + 1e-12 {
                grid.push(w.min(end));
            }
        }
        Ok(grid)
    } else {
        spec.split(',').map(parse_one).collect()
    }
}

fn sweep(run: &RunConfig, c: &SweepConfig) -> Result<()> {
    echo_config(&c.out, run)?;
    let a = load_predictions(&c.a, c.from_logits_a)?;
    let b = load_predictions(&c.b, c.from_logits_b)?;
    let ds = load_param_dataset(&c.labels, ParamKind::parse(&c.kind)?)?;
    let (a, b, ds) = align_prediction_pair(&a, &b, Some(&ds))?;
    let ds = ds.expect("labels aligned");
    let grid = parse_grid(&c.grid)?;

    let objective = match c.objective.as_str() {
        "accuracy" => SweepObjective::Accuracy,
        "ccc" => SweepObjective::MeanCcc,
        "rmse" => SweepObjective::Rmse,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep objective {other:?} (expected accuracy, ccc, or rmse)"
            )))
        }
    };
    let (best_w, table) = match objective {
        SweepObjective::Accuracy => {
            let (pa, pb) = match (&a.probs, &b.probs) {
                (Some(pa), Some(pb)) => (pa, pb),
                _ => {
                    return Err(Error::Data(
                        "accuracy sweep needs class probabilities on both sides".into(),
                    ))
                }
            };
            sweep_fusion_weight(pa, pb, &SweepTruth::Labels(&ds.labels), &grid, objective)?
        }
        SweepObjective::MeanCcc | SweepObjective::Rmse => {
            let (va, vb) = match (&a.va, &b.va) {
                (Some(va), Some(vb)) => (va, vb),
                _ => {
                    return Err(Error::Data(
                        "va sweeps need valence/arousal on both sides".into(),
                    ))
                }
            };
            let target = ds.va_matrix()?;
            sweep_fusion_weight(va, vb, &SweepTruth::Va(&target), &grid, objective)?
        }
    };

    let sweep_json = json!({
        "objective": c.objective,
        "best_w": best_w,
        "table": table,
    });
    std::fs::write(
        c.out.join("metrics.json"),
        serde_json::to_string_pretty(&sweep_json)?,
    )?;
    let mut report = format!("{:<8} {:>12}\n", "w", c.objective);
    for row in &table {
        report.push_str(&format!("{:<8} {:>12.6}\n", row.w, row.value));
    }
    report.push_str(&format!("best_w {best_w}\n"));
    std::fs::write(c.out.join("report.txt"), report)?;
    println!("best_w {best_w}");
    Ok(())
}

fn gradcheck(run: &RunConfig, c: &GradcheckConfig) -> Result<()> {
    echo_config(&c.out, run)?;
    let results = run_gradcheck_suite(c)?;
    let mut report = String::new();
    let mut obj = serde_json::Map::new();
    for (name, err) in &results {
        let status = if *err < c.tolerance { "PASS" } else { "FAIL" };
        report.push_str(&format!(
            "{status}: {name} max relative error {err:.3e} (tolerance {:.1e})\n",
            c.tolerance
        ));
        obj.insert(name.clone(), json!(err));
    }
    print!("{report}");
    std::fs::write(c.out.join("report.txt"), &report)?;
    std::fs::write(
        c.out.join("metrics.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(obj))?,
    )?;
    Ok(())
}

/// Runs the gradient check against every loss. The batch is drawn from
/// derived seeds until every leaky-ReLU pre-activation clears `10 h`, so
/// the finite differences stay away from the kinks.
pub fn run_gradcheck_suite(c: &GradcheckConfig) -> Result<Vec<(String, f64)>> {
    let mcfg = MlpConfig {
        hidden_width: c.hidden_width,
        dropout: (0.0, 0.0),
        ..Default::default()
    };
    let build = |head: HeadKind| -> Result<MlpModel> {
        build_classifier_with(c.input_dim, head, &mcfg, RngState::seed(c.seed))
    };

    let mut results = Vec::new();
    let cases: Vec<(String, HeadKind, LossKind)> = vec![
        ("mse".into(), HeadKind::Custom(7), LossKind::Mse),
        ("ce".into(), HeadKind::Custom(7), LossKind::CrossEntropy),
        (
            "wce".into(),
            HeadKind::Custom(7),
            LossKind::WeightedCe(class_weights_from_counts(&[10, 30, 20, 15, 5, 12, 8])?),
        ),
        (
            "composite".into(),
            HeadKind::Affectnet8Va,
            LossKind::Composite(LossWeights::new(0.3, 0.5, 0.7)?),
        ),
        (
            "stage1".into(),
            HeadKind::Affectnet8Va,
            LossKind::Stage1(
                class_weights_from_counts(&[9, 21, 14, 17, 6, 11, 13, 9])?,
                VaLossConfig::default(),
            ),
        ),
        (
            "stage2".into(),
            HeadKind::VaOnly2,
            LossKind::Stage2(VaLossConfig::default()),
        ),
    ];
    for (name, head, loss) in cases {
        let mut model = build(head)?;
        let (batch, targets) = gradcheck_fixture(&model, head, c)?;
        let err = grad_check(&mut model, &loss, &batch, &targets, c.h)?;
        results.push((name, err));
    }
    Ok(results)
}

fn gradcheck_fixture(
    model: &MlpModel,
    head: HeadKind,
    c: &GradcheckConfig,
) -> Result<(Matrix, BatchTargets)> {
    let clearance = 10.0 * c.h;
    for attempt in 0..200u64 {
        let mut rng = RngState::seed(crate::training::derive_seed(c.seed, 0x4243 + attempt));
        let mut batch = Matrix::zeros(c.batch, c.input_dim);
        for v in batch.data_mut() {
            *v = rng.uniform(-1.0, 1.0)?;
        }
        if model.min_leaky_preactivation(&batch)? <= clearance {
            continue;
        }
        let labels: Vec<usize> = (0..c.batch).map(|_| rng.index(head.class_count().max(1))).collect();
        let va_width = match head {
            HeadKind::VaOnly2 => 2,
            HeadKind::Affectnet8Va => 2,
            HeadKind::Custom(n) => n,
            HeadKind::RafDb7 => 7,
        };
        let mut va = Matrix::zeros(c.batch, va_width);
        for v in va.data_mut() {
            *v = rng.uniform(-0.9, 0.9)?;
        }
        let targets = BatchTargets {
            labels: (head.class_count() > 0).then_some(labels),
            va: Some(va),
        };
        return Ok((batch, targets));
    }
    Err(Error::Domain(format!(
        "no batch with leaky-ReLU clearance above {clearance} found in 200 attempts"
    )))
}

fn synth(run: &RunConfig, c: &SynthConfig) -> Result<()> {
    let splitting = c.val_out.is_some();
    let spec = SynthSpec {
        classes: c.classes,
        dim: c.dim,
        per_class: c.per_class + if splitting { c.val_per_class } else { 0 },
        margin: c.margin,
        noise_sigma: c.sigma,
        label_space: LabelSpace::parse(&c.label_space)?,
        va: c.with_va.then_some(SynthVaSpec {
            noise_sigma: c.va_noise,
        }),
    };
    let ds = synth_generate(&spec, &mut RngState::seed(c.seed))?;
    let save = |ds: &ParamDataset, path: &Path| -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        match c.format.as_str() {
            "csv" => save_param_dataset_csv(ds, path),
            "bin" => save_param_dataset_binary(ds, path),
            other => Err(Error::Config(format!(
                "unknown format {other:?} (expected csv or bin)"
            ))),
        }
    };
    println!("{}", serde_json::to_string(run)?);
    match &c.val_out {
        None => {
            save(&ds, &c.out)?;
            println!("wrote {} samples to {}", ds.len(), c.out.display());
        }
        Some(val_path) => {
            let (train, val) = crate::data::split_per_class(&ds, c.val_per_class)?;
            save(&train, &c.out)?;
            save(&val, val_path)?;
            println!(
                "wrote {} train samples to {} and {} validation samples to {}",
                train.len(),
                c.out.display(),
                val.len(),
                val_path.display()
            );
        }
    }
    Ok(())
}

fn decode_mesh(run: &RunConfig, c: &DecodeMeshConfig) -> Result<()> {
    let asset = crate::morphviz::load_asset(&c.asset)?;
    let (shape, expr) = parse_mesh_params(&c.params)?;
    let mesh = crate::morphviz::decode_mesh(&asset, &shape, &expr)?;
    if let Some(parent) = c.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    crate::morphviz::export_obj(&mesh, &c.out)?;
    println!("{}", serde_json::to_string(run)?);
    println!(
        "wrote {} vertices, {} triangles to {}",
        mesh.vertices.rows(),
        mesh.triangles.len(),
        c.out.display()
    );
    Ok(())
}

/// Parameter file for decode-mesh: `shape,<floats...>` and
/// `expr,<floats...>` lines, either optional.
fn parse_mesh_params(path: &PathBuf) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut shape = Vec::new();
    let mut expr = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let tag = fields.next().unwrap_or("");
        let values: Vec<f64> = fields
            .map(|f| crate::data::parse_float(f, line_no, "parameter"))
            .collect::<Result<_>>()?;
        match tag {
            "shape" => shape = values,
            "expr" => expr = values,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown parameter block {other:?} (expected shape or expr)"),
                })
            }
        }
    }
    Ok((shape, expr))
}

fn print_summary(report: &MetricsReport) {
    if let Some(c) = &report.classification {
        println!(
            "accuracy {:.4}  f1_w {:.4}  p_w {:.4}  r_w {:.4}",
            c.accuracy, c.weighted_avg.f1, c.weighted_avg.precision, c.weighted_avg.recall
        );
    }
    if let Some(r) = &report.regression {
        println!(
            "mse {:.4}  mae {:.4}  rmse {:.4}  ccc {:.4}",
            r.mean.mse, r.mean.mae, r.mean.rmse, r.mean.ccc
        );
    }
}

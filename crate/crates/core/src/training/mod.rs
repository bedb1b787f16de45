//! The optimization loop: mini-batch training with the cyclic triangular
//! learning rate, decoupled weight decay, early stopping on validation
//! loss, best-checkpoint retention, and the two-stage valence-arousal
//! protocol.
//!
//! With a fixed seed the whole trajectory is reproducible: batch order,
//! dropout masks, and the composite-loss weight draws all come from
//! deterministic streams derived from `TrainConfig::seed`.

mod checkpoint;
mod optimizer;
mod schedule;

pub use checkpoint::{
    apply_blocks, load_checkpoint, read_envelope, save_checkpoint, write_envelope,
    ArchDescriptor, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optimizer::{AdamConfig, OptimizerState};
pub use schedule::{early_stop_update, CyclicLr, EarlyStopping};

use serde::{Deserialize, Serialize};

use crate::data::{class_frequencies, ParamDataset};
use crate::error::{Error, Result};
use crate::losses::{
    class_weights_from_counts, ccc, BatchTargets, LossKind, LossWeights, VaLossConfig,
};
use crate::nn::{HeadKind, MlpModel, Mode};
use crate::numerics::{Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    #[default]
    Triangular,
}

/// Training hyperparameters. Defaults: batch 64, weight decay 1e-5, at
/// most 100 epochs, patience 3, triangular cyclic learning rate from
/// 1e-6 to 1e-4 with a step size of half the per-epoch batch count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub max_lr: f64,
    /// Scheduler half-cycle in optimizer steps; `None` resolves to
    /// `batches_per_epoch / 2` at run start.
    pub step_size: Option<usize>,
    pub scheduler_mode: SchedulerMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            weight_decay: 1e-5,
            max_epochs: 100,
            patience: 3,
            base_lr: 1e-6,
            max_lr: 1e-4,
            step_size: None,
            scheduler_mode: SchedulerMode::Triangular,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2 (batch statistics), got {}",
                self.batch_size
            )));
        }
        if self.base_lr.is_nan() || self.max_lr.is_nan() || self.base_lr >= self.max_lr {
            return Err(Error::Config(format!(
                "base_lr {} must be below max_lr {}",
                self.base_lr, self.max_lr
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.step_size == Some(0) {
            return Err(Error::Config("step_size must be at least 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "invalid weight decay {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    fn resolved_step_size(&self, batches_per_epoch: usize) -> usize {
        self.step_size.unwrap_or(batches_per_epoch / 2).max(1)
    }
}

/// Which loss drives training. Class weights for the weighted variants
/// are derived from the training split's label frequencies at run start;
/// the composite loss resamples its weighting factors every batch.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    CrossEntropy,
    WeightedCrossEntropy,
    Mse,
    Composite,
    Stage1(VaLossConfig),
    Stage2(VaLossConfig),
}

impl LossSpec {
    fn needs_va(&self) -> bool {
        matches!(
            self,
            LossSpec::Mse | LossSpec::Composite | LossSpec::Stage1(_) | LossSpec::Stage2(_)
        )
    }

    fn needs_labels(&self) -> bool {
        matches!(
            self,
            LossSpec::CrossEntropy
                | LossSpec::WeightedCrossEntropy
                | LossSpec::Composite
                | LossSpec::Stage1(_)
        )
    }
}

/// One line of the training history (serialized to `history.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr_first: f64,
    pub lr_last: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_mean_ccc: Option<f64>,
}

/// Outcome of a fit: per-epoch history and which epoch's parameters the
/// model retains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub stopped_early: bool,
}

/// Both stages of the valence-arousal protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageReport {
    pub stage1: FitReport,
    pub stage2: FitReport,
}

/// Deterministic stream separation: one SplitMix64 scramble of
/// `seed ^ tag`.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The loop's view of a trainable model plus its data: the plain MLP and
/// the intermediate fusion model both implement it.
pub(crate) trait TrainTask {
    type State;
    fn train_len(&self) -> usize;
    fn forward_train(&mut self, rows: &[usize]) -> Result<Matrix>;
    fn train_targets(&self, rows: &[usize]) -> Result<BatchTargets>;
    fn forward_val(&self) -> Result<Matrix>;
    fn val_targets(&self) -> Result<BatchTargets>;
    fn backprop(&mut self, grad: &Matrix) -> Result<()>;
    fn zero_grads(&mut self);
    fn optimizer_params(&mut self) -> Vec<(&mut [f64], &[f64])>;
    fn save_state(&self) -> Self::State;
    fn restore_state(&mut self, state: Self::State);
}

/// Per-batch training loss; the composite loss draws fresh weighting
/// factors for every batch, validation always uses equal factors so the
/// monitored loss is deterministic.
pub(crate) enum TrainLoss {
    Fixed(LossKind),
    CompositePerBatch,
}

pub(crate) struct ResolvedLoss {
    pub train: TrainLoss,
    pub val: LossKind,
    /// Number of leading classification columns in the head output, when
    /// a classification accuracy should be recorded per epoch.
    pub class_cols: Option<usize>,
}

pub(crate) fn run_training<T: TrainTask>(
    task: &mut T,
    loss: &ResolvedLoss,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    let n = task.train_len();
    if n == 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    let batches = n / cfg.batch_size;
    if batches == 0 {
        return Err(Error::Data(format!(
            "training split has {n} samples, smaller than one batch of {}",
            cfg.batch_size
        )));
    }
    let schedule = CyclicLr::new(
        cfg.base_lr,
        cfg.max_lr,
        cfg.resolved_step_size(batches),
    );
    let mut shuffle_rng = RngState::seed(derive_seed(cfg.seed, 0x5348_5546)); // "SHUF"
    let mut loss_rng = RngState::seed(derive_seed(cfg.seed, 0x4c4f_5353)); // "LOSS"
    let mut optimizer = OptimizerState::new(AdamConfig::default());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, T::State)> = None;
    let mut stopped_early = false;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut global_step = 0usize;

    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut indices);
        let lr_first = schedule.lr(global_step);
        let mut lr_last = lr_first;
        let mut train_loss_sum = 0.0;
        for b in 0..batches {
            let rows = &indices[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let lr = schedule.lr(global_step);
            lr_last = lr;
            task.zero_grads();
            let out = task.forward_train(rows)?;
            let targets = task.train_targets(rows)?;
            let kind = match &loss.train {
                TrainLoss::Fixed(k) => k.clone(),
                TrainLoss::CompositePerBatch => {
                    LossKind::Composite(LossWeights::sample(&mut loss_rng))
                }
            };
            let (batch_loss, grad) = kind.eval(&out, &targets)?;
            task.backprop(&grad)?;
            let mut params = task.optimizer_params();
            optimizer.step(&mut params, lr, cfg.weight_decay)?;
            train_loss_sum += batch_loss;
            global_step += 1;
        }

        let val_out = task.forward_val()?;
        let val_targets = task.val_targets()?;
        let (val_loss, _) = loss.val.eval(&val_out, &val_targets)?;
        let (val_accuracy, val_mean_ccc) =
            epoch_val_metrics(&val_out, &val_targets, loss.class_cols)?;

        let (stop, improved) = stopper.update(val_loss);
        if improved {
            best = Some((epoch, val_loss, task.save_state()));
        }
        history.push(EpochRecord {
            epoch,
            lr_first,
            lr_last,
            train_loss: train_loss_sum / batches as f64,
            val_loss,
            val_accuracy,
            val_mean_ccc,
        });
        if stop {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val_loss) = match best {
        Some((epoch, loss_value, state)) => {
            task.restore_state(state);
            (Some(epoch), Some(loss_value))
        }
        None => (None, None),
    };
    Ok(FitReport {
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

fn epoch_val_metrics(
    val_out: &Matrix,
    targets: &BatchTargets,
    class_cols: Option<usize>,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut accuracy = None;
    if let (Some(cols), Some(labels)) = (class_cols, targets.labels.as_ref()) {
        let mut correct = 0usize;
        for (i, &label) in labels.iter().enumerate() {
            let row = &val_out.row(i)[..cols];
            let arg = row
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .map(|(j, _)| j)
                .unwrap_or(0);
            if arg == label {
                correct += 1;
            }
        }
        accuracy = Some(correct as f64 / labels.len() as f64);
    }
    let mut mean_ccc = None;
    if let Some(va) = targets.va.as_ref() {
        if va.cols() == 2 && val_out.cols() >= 2 && va.rows() >= 2 {
            let offset = val_out.cols() - 2;
            let mut sum = 0.0;
            for d in 0..2 {
                let pred: Vec<f64> = (0..val_out.rows()).map(|i| val_out.get(i, offset + d)).collect();
                sum += ccc(&pred, &va.column(d))?.value;
            }
            mean_ccc = Some(sum / 2.0);
        }
    }
    Ok((accuracy, mean_ccc))
}

/// The plain classifier task over parameter-vector datasets.
struct MlpTask<'a> {
    model: &'a mut MlpModel,
    train_features: &'a Matrix,
    train_labels: Option<&'a [usize]>,
    train_va: Option<Matrix>,
    val_features: &'a Matrix,
    val_labels: Option<Vec<usize>>,
    val_va: Option<Matrix>,
}

impl TrainTask for MlpTask<'_> {
    type State = MlpModel;

    fn train_len(&self) -> usize {
        self.train_features.rows()
    }

    fn forward_train(&mut self, rows: &[usize]) -> Result<Matrix> {
        let batch = self.train_features.take_rows(rows);
        self.model.forward(&batch, Mode::Train)
    }

    fn train_targets(&self, rows: &[usize]) -> Result<BatchTargets> {
        Ok(BatchTargets {
            labels: self
                .train_labels
                .map(|ls| rows.iter().map(|&i| ls[i]).collect()),
            va: self.train_va.as_ref().map(|m| m.take_rows(rows)),
        })
    }

    fn forward_val(&self) -> Result<Matrix> {
        self.model.forward_eval(self.val_features)
    }

    fn val_targets(&self) -> Result<BatchTargets> {
        Ok(BatchTargets {
            labels: self.val_labels.clone(),
            va: self.val_va.clone(),
        })
    }

    fn backprop(&mut self, grad: &Matrix) -> Result<()> {
        self.model.backprop(grad).map(|_| ())
    }

    fn zero_grads(&mut self) {
        self.model.zero_grads();
    }

    fn optimizer_params(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.model.trainable_mut()
    }

    fn save_state(&self) -> MlpModel {
        self.model.clone()
    }

    fn restore_state(&mut self, state: MlpModel) {
        *self.model = state;
    }
}

/// Resolves a [`LossSpec`] against the training split: derives class
/// weights where needed and fixes the validation-side loss (the composite
/// loss validates with equal weighting factors).
pub(crate) fn resolve_loss_for(
    spec: &LossSpec,
    train: &ParamDataset,
    head: HeadKind,
) -> Result<ResolvedLoss> {
    let class_weights = || -> Result<_> {
        let counts = class_frequencies(train)?;
        class_weights_from_counts(&counts)
    };
    let equal = LossWeights::new(1.0, 1.0, 1.0).expect("valid");
    Ok(match spec {
        LossSpec::CrossEntropy => ResolvedLoss {
            train: TrainLoss::Fixed(LossKind::CrossEntropy),
            val: LossKind::CrossEntropy,
            class_cols: Some(head.class_count()),
        },
        LossSpec::WeightedCrossEntropy => {
            let w = class_weights()?;
            ResolvedLoss {
                train: TrainLoss::Fixed(LossKind::WeightedCe(w.clone())),
                val: LossKind::WeightedCe(w),
                class_cols: Some(head.class_count()),
            }
        }
        LossSpec::Mse => ResolvedLoss {
            train: TrainLoss::Fixed(LossKind::Mse),
            val: LossKind::Mse,
            class_cols: None,
        },
        LossSpec::Composite => ResolvedLoss {
            train: TrainLoss::CompositePerBatch,
            val: LossKind::Composite(equal),
            class_cols: Some(head.class_count()),
        },
        LossSpec::Stage1(cfg) => {
            let w = class_weights()?;
            ResolvedLoss {
                train: TrainLoss::Fixed(LossKind::Stage1(w.clone(), *cfg)),
                val: LossKind::Stage1(w, *cfg),
                class_cols: Some(head.class_count()),
            }
        }
        LossSpec::Stage2(cfg) => ResolvedLoss {
            train: TrainLoss::Fixed(LossKind::Stage2(*cfg)),
            val: LossKind::Stage2(*cfg),
            class_cols: None,
        },
    })
}

fn check_split(name: &str, ds: &ParamDataset, model: &MlpModel) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Data(format!("{name} split is empty")));
    }
    if ds.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "{name} split has {} parameter dims, model expects {}",
            ds.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Trains the model on shuffled mini-batches (the trailing short batch is
/// dropped; batch statistics need full batches) and retains the
/// best-validation parameters in the model.
pub fn fit(
    model: &mut MlpModel,
    train: &ParamDataset,
    val: &ParamDataset,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    check_split("training", train, model)?;
    check_split("validation", val, model)?;
    let resolved = resolve_loss_for(loss, train, model.head())?;
    let needs_va = loss.needs_va();
    let needs_labels = loss.needs_labels();
    let mut task = MlpTask {
        train_features: &train.features,
        train_labels: needs_labels.then_some(train.labels.as_slice()),
        train_va: if needs_va { Some(train.va_matrix()?) } else { None },
        val_features: &val.features,
        val_labels: needs_labels.then(|| val.labels.clone()),
        val_va: if needs_va { Some(val.va_matrix()?) } else { None },
        model,
    };
    run_training(&mut task, &resolved, cfg)
}

/// The two-stage valence-arousal protocol: stage 1 trains the 8-class +
/// VA head with weighted cross-entropy plus `w1 * MSE`; stage 2 swaps in
/// a freshly initialized 2-wide VA head, keeps the trunk, and trains with
/// the concordance loss plus `w2 * MSE`. Both stages run under the same
/// hyperparameters; stage 2 derives its own deterministic seed.
pub fn fit_two_stage_va(
    model: &mut MlpModel,
    train: &ParamDataset,
    val: &ParamDataset,
    cfg: &TrainConfig,
    va_cfg: &VaLossConfig,
) -> Result<TwoStageReport> {
    if model.head() != HeadKind::Affectnet8Va {
        return Err(Error::Config(format!(
            "two-stage va training needs the 8-class + va head, model has {:?}",
            model.head()
        )));
    }
    if !train.has_full_va() || !val.has_full_va() {
        return Err(Error::Data(
            "two-stage va training needs valence/arousal targets on every sample".into(),
        ));
    }
    let stage1 = fit(model, train, val, &LossSpec::Stage1(*va_cfg), cfg)?;
    model.replace_head(HeadKind::VaOnly2)?;
    let mut stage2_cfg = cfg.clone();
    stage2_cfg.seed = derive_seed(cfg.seed, 0x5354_4732); // "STG2"
    let stage2 = fit(model, train, val, &LossSpec::Stage2(*va_cfg), &stage2_cfg)?;
    Ok(TwoStageReport { stage1, stage2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, LabelSpace, SynthSpec, SynthVaSpec};
    use crate::nn::{build_classifier_with, MlpConfig};

    fn synth(classes: usize, dim: usize, per_class: usize, seed: u64, va: bool) -> ParamDataset {
        let spec = SynthSpec {
            classes,
            dim,
            per_class,
            margin: 6.0,
            noise_sigma: 1.0,
            label_space: LabelSpace::Affect8,
            va: va.then_some(SynthVaSpec { noise_sigma: 0.05 }),
        };
        synth_generate(&spec, &mut RngState::seed(seed)).unwrap()
    }

    fn small_cfg(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            max_epochs: epochs,
            seed,
            ..Default::default()
        }
    }

    fn small_model(dim: usize, head: HeadKind, seed: u64) -> MlpModel {
        let cfg = MlpConfig {
            hidden_width: 32,
            ..Default::default()
        };
        build_classifier_with(dim, head, &cfg, RngState::seed(seed)).unwrap()
    }

    #[test]
    fn fixed_seed_reproduces_history_and_weights() {
        let train = synth(3, 8, 20, 1, false);
        let val = synth(3, 8, 8, 2, false);
        let run = |seed: u64| {
            let mut model = small_model(8, HeadKind::Custom(3), seed);
            let report = fit(
                &mut model,
                &train,
                &val,
                &LossSpec::CrossEntropy,
                &small_cfg(seed, 3),
            )
            .unwrap();
            (report, model)
        };
        let (r1, m1) = run(7);
        let (r2, m2) = run(7);
        assert_eq!(r1, r2);
        for ((_, a), (_, b)) in m1.state_blocks().iter().zip(m2.state_blocks().iter()) {
            assert_eq!(a.data(), b.data());
        }
        let (r3, _) = run(8);
        assert_ne!(r1.history, r3.history);
    }

    #[test]
    fn constant_loss_stops_at_patience_plus_one() {
        // lr ~ 0 with batch norm and dropout off freezes everything the
        // validation pass can see, so its loss is exactly constant
        let train = synth(3, 8, 20, 3, false);
        let val = synth(3, 8, 8, 4, false);
        let mcfg = MlpConfig {
            hidden_width: 32,
            dropout: (0.0, 0.0),
            batch_norm: false,
            ..Default::default()
        };
        let mut model =
            build_classifier_with(8, HeadKind::Custom(3), &mcfg, RngState::seed(5)).unwrap();
        let mut cfg = small_cfg(5, 50);
        cfg.base_lr = 0.0;
        cfg.max_lr = 1e-300;
        cfg.weight_decay = 0.0;
        let report = fit(&mut model, &train, &val, &LossSpec::CrossEntropy, &cfg).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.history.len(), 4);
    }

    #[test]
    fn best_checkpoint_has_minimum_val_loss() {
        let train = synth(3, 8, 30, 11, false);
        let val = synth(3, 8, 10, 12, false);
        let mut model = small_model(8, HeadKind::Custom(3), 13);
        let mut cfg = small_cfg(13, 10);
        cfg.max_lr = 1e-3;
        let report = fit(&mut model, &train, &val, &LossSpec::CrossEntropy, &cfg).unwrap();
        let min = report
            .history
            .iter()
            .map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_loss.unwrap(), min);
    }

    #[test]
    fn zero_epoch_fit_leaves_model_untouched() {
        let train = synth(3, 8, 20, 21, false);
        let val = synth(3, 8, 8, 22, false);
        let mut model = small_model(8, HeadKind::Custom(3), 23);
        let before: Vec<Vec<f64>> = model
            .state_blocks()
            .iter()
            .map(|(_, m)| m.data().to_vec())
            .collect();
        let report = fit(
            &mut model,
            &train,
            &val,
            &LossSpec::CrossEntropy,
            &small_cfg(23, 0),
        )
        .unwrap();
        assert!(report.history.is_empty());
        assert_eq!(report.best_epoch, None);
        let after: Vec<Vec<f64>> = model
            .state_blocks()
            .iter()
            .map(|(_, m)| m.data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn missing_va_targets_is_a_data_error() {
        let train = synth(8, 10, 10, 31, false);
        let val = synth(8, 10, 4, 32, false);
        let mut model = small_model(10, HeadKind::Affectnet8Va, 33);
        let err = fit_two_stage_va(
            &mut model,
            &train,
            &val,
            &small_cfg(33, 2),
            &VaLossConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn two_stage_ends_with_two_wide_head() {
        let train = synth(8, 10, 12, 41, true);
        let val = synth(8, 10, 6, 42, true);
        let mut model = small_model(10, HeadKind::Affectnet8Va, 43);
        let report = fit_two_stage_va(
            &mut model,
            &train,
            &val,
            &small_cfg(43, 2),
            &VaLossConfig::default(),
        )
        .unwrap();
        assert_eq!(model.head_width(), 2);
        assert_eq!(report.stage1.history.len(), 2);
        assert_eq!(report.stage2.history.len(), 2);
    }

    #[test]
    fn stage_two_with_zero_epochs_keeps_stage_one_trunk() {
        let train = synth(8, 10, 12, 51, true);
        let val = synth(8, 10, 6, 52, true);
        let mut model = small_model(10, HeadKind::Affectnet8Va, 53);
        let mut cfg = small_cfg(53, 0);
        cfg.max_epochs = 0;
        // stage 1 with zero epochs, then head swap, then zero-epoch stage 2
        fit_two_stage_va(&mut model, &train, &val, &cfg, &VaLossConfig::default()).unwrap();
        let head_tag = format!("layer{}.", model.layers().len() - 1);
        let mut reference = small_model(10, HeadKind::Affectnet8Va, 53);
        reference.replace_head(HeadKind::VaOnly2).unwrap();
        for ((name, a), (_, b)) in model
            .state_blocks()
            .iter()
            .zip(reference.state_blocks().iter())
        {
            if !name.starts_with(&head_tag) {
                assert_eq!(a.data(), b.data(), "trunk block {name}");
            }
        }
    }

    #[test]
    fn short_final_batch_is_dropped() {
        let train = synth(3, 8, 11, 61, false); // 33 samples, batch 16 -> 2 batches
        let val = synth(3, 8, 8, 62, false);
        let mut model = small_model(8, HeadKind::Custom(3), 63);
        let report = fit(
            &mut model,
            &train,
            &val,
            &LossSpec::CrossEntropy,
            &small_cfg(63, 1),
        )
        .unwrap();
        assert_eq!(report.history.len(), 1);
        // smaller-than-one-batch splits are rejected
        let tiny = synth(3, 8, 2, 64, false); // 6 samples < 16
        let err = fit(
            &mut model,
            &tiny,
            &val,
            &LossSpec::CrossEntropy,
            &small_cfg(64, 1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}

//! The two fusion architectures: intermediate fusion (a learned linear
//! projection of the 3D parameters concatenated with 2D features, feeding
//! the standard classifier) and late fusion (max/min/mean/weighted
//! combination of independent model outputs), plus fusion-weight sweeping.
//!
//! Late fusion of classifiers operates on post-softmax probabilities, not
//! logits: the two sides come from unrelated models whose logit scales
//! are incomparable. Max/min fusion renormalizes each fused row (the
//! argmax is unaffected; reported distributions stay valid). Sample
//! alignment is by explicit id, never by file order.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureSet, ParamDataset};
use crate::error::{Error, Result};
use crate::losses::{ccc, BatchTargets};
use crate::nn::{
    build_classifier_with, HeadKind, LinearLayer, MlpConfig, MlpModel, Mode,
};
use crate::numerics::{Matrix, RngState};
use crate::training::{
    run_training, write_envelope, apply_blocks, read_envelope, ArchDescriptor, CheckpointMeta,
    FitReport, LossSpec, TrainConfig, TrainTask,
};

/// How two aligned prediction sets are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "w")]
pub enum FusionStrategy {
    Max,
    Min,
    Mean,
    /// `w` is the 3D share: fused = (1-w) * first + w * second.
    Weighted(f64),
}

impl FusionStrategy {
    pub fn validate(&self) -> Result<()> {
        if let FusionStrategy::Weighted(w) = self {
            if !(w.is_finite() && (0.0..=1.0).contains(w)) {
                return Err(Error::Config(format!(
                    "fusion weight must lie in [0, 1], got {w}"
                )));
            }
        }
        Ok(())
    }
}

fn check_pair(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn check_probability_rows(m: &Matrix, side: &str) -> Result<()> {
    for i in 0..m.rows() {
        let sum: f64 = m.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "{side} row {i} sums to {sum}; late fusion needs probabilities, not logits"
            )));
        }
    }
    Ok(())
}

/// Combines two aligned class-probability matrices. Mean averages,
/// weighted mixes with the 3D share `w`, max/min take the elementwise
/// extremum and renormalize the row to sum 1.
pub fn late_fuse_class(p2d: &Matrix, p3d: &Matrix, s: &FusionStrategy) -> Result<Matrix> {
    s.validate()?;
    check_pair(p2d, p3d, "late class fusion")?;
    check_probability_rows(p2d, "first source")?;
    check_probability_rows(p3d, "second source")?;
    let mut out = Matrix::zeros(p2d.rows(), p2d.cols());
    for i in 0..p2d.rows() {
        let a = p2d.row(i);
        let b = p3d.row(i);
        let row = out.row_mut(i);
        match s {
            FusionStrategy::Mean => {
                for (o, (&x, &y)) in row.iter_mut().zip(a.iter().zip(b)) {
                    *o = (x + y) / 2.0;
                }
            }
            FusionStrategy::Weighted(w) => {
                let (wa, wb) = (1.0 - w, *w);
                for (o, (&x, &y)) in row.iter_mut().zip(a.iter().zip(b)) {
                    *o = wa * x + wb * y;
                }
            }
            FusionStrategy::Max | FusionStrategy::Min => {
                let take_max = matches!(s, FusionStrategy::Max);
                let mut sum = 0.0;
                for (o, (&x, &y)) in row.iter_mut().zip(a.iter().zip(b)) {
                    *o = if take_max { x.max(y) } else { x.min(y) };
                    sum += *o;
                }
                if sum > 0.0 {
                    for o in row.iter_mut() {
                        *o /= sum;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_va_range(m: &Matrix, side: &str) -> Result<()> {
    for i in 0..m.rows() {
        for &x in m.row(i) {
            if !(-1.0..=1.0).contains(&x) {
                return Err(Error::Data(format!(
                    "{side} row {i} carries va value {x} outside [-1, 1]"
                )));
            }
        }
    }
    Ok(())
}

/// Combines two aligned `(N x 2)` valence-arousal matrices elementwise.
pub fn late_fuse_va(va2d: &Matrix, va3d: &Matrix, s: &FusionStrategy) -> Result<Matrix> {
    s.validate()?;
    check_pair(va2d, va3d, "late va fusion")?;
    if va2d.cols() != 2 {
        return Err(Error::Shape(format!(
            "va fusion expects 2 columns, got {}",
            va2d.cols()
        )));
    }
    check_va_range(va2d, "first source")?;
    check_va_range(va3d, "second source")?;
    let mut out = Matrix::zeros(va2d.rows(), 2);
    for i in 0..va2d.rows() {
        for j in 0..2 {
            let (x, y) = (va2d.get(i, j), va3d.get(i, j));
            let v = match s {
                FusionStrategy::Mean => (x + y) / 2.0,
                FusionStrategy::Weighted(w) => (1.0 - w) * x + w * y,
                FusionStrategy::Max => x.max(y),
                FusionStrategy::Min => x.min(y),
            };
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// What the sweep optimizes at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    /// Argmax accuracy of fused class probabilities (maximized).
    Accuracy,
    /// Mean CCC over the two va dimensions (maximized).
    MeanCcc,
    /// Mean per-dimension RMSE of fused va (minimized).
    Rmse,
}

/// Ground truth for the sweep objective.
pub enum SweepTruth<'a> {
    Labels(&'a [usize]),
    Va(&'a Matrix),
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w: f64,
    pub value: f64,
}

/// Evaluates weighted fusion at every grid weight and returns the best
/// weight with the full table (sorted by weight ascending). Ties break
/// toward the smaller weight.
pub fn sweep_fusion_weight(
    a: &Matrix,
    b: &Matrix,
    truth: &SweepTruth,
    grid: &[f64],
    objective: SweepObjective,
) -> Result<(f64, Vec<SweepRow>)> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut ws: Vec<f64> = grid.to_vec();
    for &w in &ws {
        if !(w.is_finite() && (0.0..=1.0).contains(&w)) {
            return Err(Error::Config(format!("sweep weight {w} outside [0, 1]")));
        }
    }
    ws.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut table = Vec::with_capacity(ws.len());
    let mut best: Option<(f64, f64)> = None;
    for &w in &ws {
        let strategy = FusionStrategy::Weighted(w);
        let value = match (objective, truth) {
            (SweepObjective::Accuracy, SweepTruth::Labels(labels)) => {
                let fused = late_fuse_class(a, b, &strategy)?;
                if labels.len() != fused.rows() {
                    return Err(Error::Shape(format!(
                        "{} labels for {} fused rows",
                        labels.len(),
                        fused.rows()
                    )));
                }
                let mut correct = 0usize;
                for (i, &l) in labels.iter().enumerate() {
                    let arg = fused
                        .row(i)
                        .iter()
                        .enumerate()
                        .max_by(|(_, x), (_, y)| x.partial_cmp(y).unwrap())
                        .map(|(j, _)| j)
                        .unwrap_or(0);
                    if arg == l {
                        correct += 1;
                    }
                }
                correct as f64 / labels.len() as f64
            }
            (SweepObjective::MeanCcc, SweepTruth::Va(target)) => {
                let fused = late_fuse_va(a, b, &strategy)?;
                check_pair(&fused, target, "sweep target")?;
                (ccc(&fused.column(0), &target.column(0))?.value
                    + ccc(&fused.column(1), &target.column(1))?.value)
                    / 2.0
            }
            (SweepObjective::Rmse, SweepTruth::Va(target)) => {
                let fused = late_fuse_va(a, b, &strategy)?;
                check_pair(&fused, target, "sweep target")?;
                let mut rmse_sum = 0.0;
                for d in 0..2 {
                    let mut se = 0.0;
                    for i in 0..fused.rows() {
                        let diff = fused.get(i, d) - target.get(i, d);
                        se += diff * diff;
                    }
                    rmse_sum += (se / fused.rows() as f64).sqrt();
                }
                rmse_sum / 2.0
            }
            (SweepObjective::Accuracy, SweepTruth::Va(_)) => {
                return Err(Error::Config(
                    "accuracy sweep needs class labels, got va targets".into(),
                ))
            }
            (_, SweepTruth::Labels(_)) => {
                return Err(Error::Config(
                    "va sweeps need va targets, got class labels".into(),
                ))
            }
        };
        let better = match best {
            None => true,
            Some((_, best_value)) => match objective {
                SweepObjective::Rmse => value < best_value,
                _ => value > best_value,
            },
        };
        if better {
            best = Some((w, value));
        }
        table.push(SweepRow { w, value });
    }
    Ok((best.expect("non-empty grid").0, table))
}

/// Learned 3D projection feeding the shared classifier over the
/// concatenated `[2D features, projected 3D features]`.
#[derive(Debug, Clone)]
pub struct IntermediateFusionModel {
    proj: LinearLayer,
    cls: MlpModel,
    dim_2d: usize,
    dim_3d: usize,
}

/// Builds the fusion model: a `dim_3d -> proj_dim` linear map plus the
/// standard classifier over `dim_2d + proj_dim` inputs.
pub fn build_intermediate(
    dim_2d: usize,
    dim_3d: usize,
    proj_dim: usize,
    head: HeadKind,
    cls_config: &MlpConfig,
    mut rng: RngState,
) -> Result<IntermediateFusionModel> {
    if dim_2d == 0 || dim_3d == 0 || proj_dim == 0 {
        return Err(Error::Domain(format!(
            "fusion dimensions must be >= 1, got 2d={dim_2d}, 3d={dim_3d}, proj={proj_dim}"
        )));
    }
    let proj = LinearLayer::new(dim_3d, proj_dim, cls_config.leaky_slope, &mut rng)?;
    let cls = build_classifier_with(dim_2d + proj_dim, head, cls_config, rng)?;
    Ok(IntermediateFusionModel {
        proj,
        cls,
        dim_2d,
        dim_3d,
    })
}

impl IntermediateFusionModel {
    pub fn dim_2d(&self) -> usize {
        self.dim_2d
    }

    pub fn dim_3d(&self) -> usize {
        self.dim_3d
    }

    pub fn proj_dim(&self) -> usize {
        self.proj.out_dim()
    }

    pub fn head(&self) -> HeadKind {
        self.cls.head()
    }

    pub fn classifier(&self) -> &MlpModel {
        &self.cls
    }

    /// Test hook: overwrite the projection map.
    pub fn set_projection(&mut self, weights: Matrix, bias: Matrix) -> Result<()> {
        if weights.shape() != (self.proj.out_dim(), self.dim_3d)
            || bias.shape() != (self.proj.out_dim(), 1)
        {
            return Err(Error::Shape(format!(
                "projection blocks must be {}x{} and {}x1",
                self.proj.out_dim(),
                self.dim_3d,
                self.proj.out_dim()
            )));
        }
        self.proj.weights = weights;
        self.proj.bias = bias;
        Ok(())
    }

    fn check_inputs(&self, feat2d: &Matrix, feat3d: &Matrix) -> Result<()> {
        if feat2d.rows() != feat3d.rows() {
            return Err(Error::Alignment(format!(
                "2d side has {} rows, 3d side has {}",
                feat2d.rows(),
                feat3d.rows()
            )));
        }
        if feat2d.cols() != self.dim_2d || feat3d.cols() != self.dim_3d {
            return Err(Error::Shape(format!(
                "feature widths {}x{} vs model dims 2d={} 3d={}",
                feat2d.cols(),
                feat3d.cols(),
                self.dim_2d,
                self.dim_3d
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, feat2d: &Matrix, feat3d: &Matrix, mode: Mode) -> Result<Matrix> {
        self.check_inputs(feat2d, feat3d)?;
        match mode {
            Mode::Eval => self.forward_eval(feat2d, feat3d),
            Mode::Train => {
                let projected = self.proj.forward_train(feat3d)?;
                let combined = Matrix::concat_cols(feat2d, &projected)?;
                self.cls.forward(&combined, Mode::Train)
            }
        }
    }

    pub fn forward_eval(&self, feat2d: &Matrix, feat3d: &Matrix) -> Result<Matrix> {
        self.check_inputs(feat2d, feat3d)?;
        let projected = self.proj.forward_eval(feat3d)?;
        let combined = Matrix::concat_cols(feat2d, &projected)?;
        self.cls.forward_eval(&combined)
    }

    pub fn backprop(&mut self, grad_output: &Matrix) -> Result<()> {
        let grad_combined = self.cls.backprop(grad_output)?;
        let (_, grad_proj_out) = grad_combined.split_cols(self.dim_2d)?;
        self.proj.backward(&grad_proj_out)?;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.proj.zero_grads();
        self.cls.zero_grads();
    }

    pub fn trainable_mut(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut pairs = vec![
            (self.proj.weights.data_mut(), self.proj.grad_weights.data()),
            (self.proj.bias.data_mut(), self.proj.grad_bias.data()),
        ];
        pairs.extend(self.cls.trainable_mut());
        pairs
    }

    pub fn state_blocks(&self) -> Vec<(String, &Matrix)> {
        let mut blocks = vec![
            ("proj.weights".to_string(), &self.proj.weights),
            ("proj.bias".to_string(), &self.proj.bias),
        ];
        blocks.extend(
            self.cls
                .state_blocks()
                .into_iter()
                .map(|(n, m)| (format!("cls.{n}"), m)),
        );
        blocks
    }

    pub fn state_blocks_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut blocks = vec![
            ("proj.weights".to_string(), &mut self.proj.weights),
            ("proj.bias".to_string(), &mut self.proj.bias),
        ];
        blocks.extend(
            self.cls
                .state_blocks_mut()
                .into_iter()
                .map(|(n, m)| (format!("cls.{n}"), m)),
        );
        blocks
    }
}

/// Forward pass over id-carrying feature blocks; ids must agree pairwise
/// and the first offending id is named.
pub fn intermediate_forward(
    fm: &mut IntermediateFusionModel,
    feat2d: &FeatureSet,
    feat3d: &FeatureSet,
    mode: Mode,
) -> Result<Matrix> {
    check_ids_aligned(&feat2d.ids, &feat3d.ids)?;
    fm.forward(&feat2d.features, &feat3d.features, mode)
}

fn check_ids_aligned(a: &[String], b: &[String]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "{} vs {} samples; align the sources by id first",
            a.len(),
            b.len()
        )));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x != y {
            return Err(Error::Alignment(format!(
                "id mismatch at row {i}: {x:?} vs {y:?}; align the sources by id first"
            )));
        }
    }
    Ok(())
}

/// Aligned inputs for intermediate-fusion training: 2D features plus the
/// 3D parameter dataset carrying labels and optional va targets. Ids must
/// already agree row by row.
pub struct IntermediateSplit<'a> {
    pub feat2d: &'a FeatureSet,
    pub data3d: &'a ParamDataset,
}

impl IntermediateSplit<'_> {
    fn check(&self) -> Result<()> {
        check_ids_aligned(&self.feat2d.ids, &self.data3d.ids)
    }
}

struct IntermediateTask<'a> {
    model: &'a mut IntermediateFusionModel,
    train: &'a IntermediateSplit<'a>,
    train_va: Option<Matrix>,
    needs_labels: bool,
    val: &'a IntermediateSplit<'a>,
    val_va: Option<Matrix>,
}

impl TrainTask for IntermediateTask<'_> {
    type State = IntermediateFusionModel;

    fn train_len(&self) -> usize {
        self.train.data3d.len()
    }

    fn forward_train(&mut self, rows: &[usize]) -> Result<Matrix> {
        let f2 = self.train.feat2d.features.take_rows(rows);
        let f3 = self.train.data3d.features.take_rows(rows);
        self.model.forward(&f2, &f3, Mode::Train)
    }

    fn train_targets(&self, rows: &[usize]) -> Result<BatchTargets> {
        Ok(BatchTargets {
            labels: self
                .needs_labels
                .then(|| rows.iter().map(|&i| self.train.data3d.labels[i]).collect()),
            va: self.train_va.as_ref().map(|m| m.take_rows(rows)),
        })
    }

    fn forward_val(&self) -> Result<Matrix> {
        self.model
            .forward_eval(&self.val.feat2d.features, &self.val.data3d.features)
    }

    fn val_targets(&self) -> Result<BatchTargets> {
        Ok(BatchTargets {
            labels: self.needs_labels.then(|| self.val.data3d.labels.clone()),
            va: self.val_va.clone(),
        })
    }

    fn backprop(&mut self, grad: &Matrix) -> Result<()> {
        self.model.backprop(grad)
    }

    fn zero_grads(&mut self) {
        self.model.zero_grads();
    }

    fn optimizer_params(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.model.trainable_mut()
    }

    fn save_state(&self) -> IntermediateFusionModel {
        self.model.clone()
    }

    fn restore_state(&mut self, state: IntermediateFusionModel) {
        *self.model = state;
    }
}

/// Trains the fusion model end to end (projection and classifier jointly)
/// under the same loop contract as [`crate::training::fit`].
pub fn fit_intermediate(
    model: &mut IntermediateFusionModel,
    train: &IntermediateSplit,
    val: &IntermediateSplit,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    train.check()?;
    val.check()?;
    if train.data3d.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if val.data3d.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let resolved = crate::training::resolve_loss_for(loss, train.data3d, model.head())?;
    let needs_va = matches!(
        loss,
        LossSpec::Mse | LossSpec::Composite | LossSpec::Stage1(_) | LossSpec::Stage2(_)
    );
    let needs_labels = matches!(
        loss,
        LossSpec::CrossEntropy
            | LossSpec::WeightedCrossEntropy
            | LossSpec::Composite
            | LossSpec::Stage1(_)
    );
    let mut task = IntermediateTask {
        train_va: if needs_va {
            Some(train.data3d.va_matrix()?)
        } else {
            None
        },
        val_va: if needs_va {
            Some(val.data3d.va_matrix()?)
        } else {
            None
        },
        needs_labels,
        model,
        train,
        val,
    };
    run_training(&mut task, &resolved, cfg)
}

/// Persists the fusion model through the shared checkpoint envelope.
pub fn save_intermediate_checkpoint(
    model: &IntermediateFusionModel,
    meta: &CheckpointMeta,
    path: &std::path::Path,
) -> Result<()> {
    let arch = ArchDescriptor::Intermediate {
        dim_2d: model.dim_2d,
        dim_3d: model.dim_3d,
        proj_dim: model.proj_dim(),
        head: model.head(),
        config: model.cls.config().clone(),
    };
    write_envelope(&arch, meta, &model.state_blocks(), path)
}

pub fn load_intermediate_checkpoint(
    path: &std::path::Path,
) -> Result<(IntermediateFusionModel, CheckpointMeta)> {
    let (arch, meta, blocks) = read_envelope(path)?;
    match arch {
        ArchDescriptor::Intermediate {
            dim_2d,
            dim_3d,
            proj_dim,
            head,
            config,
        } => {
            let mut model = build_intermediate(
                dim_2d,
                dim_3d,
                proj_dim,
                head,
                &config,
                RngState::seed(meta.seed),
            )?;
            apply_blocks(model.state_blocks_mut(), &blocks)?;
            Ok((model, meta))
        }
        ArchDescriptor::Mlp { .. } => Err(Error::Format {
            offset: 0,
            message: "checkpoint holds a plain classifier; load it with the model loader".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn weighted_w0_and_w1_are_bit_exact() {
        let a = probs(&[vec![0.6, 0.4], vec![0.3, 0.7]]);
        let b = probs(&[vec![0.2, 0.8], vec![0.9, 0.1]]);
        let f0 = late_fuse_class(&a, &b, &FusionStrategy::Weighted(0.0)).unwrap();
        let f1 = late_fuse_class(&a, &b, &FusionStrategy::Weighted(1.0)).unwrap();
        assert_eq!(f0.data(), a.data());
        assert_eq!(f1.data(), b.data());
    }

    #[test]
    fn weighted_worked_example() {
        let a = probs(&[vec![0.6, 0.4]]);
        let b = probs(&[vec![0.2, 0.8]]);
        let f = late_fuse_class(&a, &b, &FusionStrategy::Weighted(0.2)).unwrap();
        assert!((f.get(0, 0) - 0.52).abs() < 1e-12);
        assert!((f.get(0, 1) - 0.48).abs() < 1e-12);
        assert!(f.get(0, 0) > f.get(0, 1)); // argmax stays class 0
    }

    #[test]
    fn identical_sources_are_a_fixed_point_of_every_strategy() {
        let a = probs(&[vec![0.25, 0.5, 0.25], vec![0.1, 0.2, 0.7]]);
        for s in [
            FusionStrategy::Max,
            FusionStrategy::Min,
            FusionStrategy::Mean,
            FusionStrategy::Weighted(0.3),
        ] {
            let f = late_fuse_class(&a, &a, &s).unwrap();
            for (x, y) in f.data().iter().zip(a.data()) {
                assert!((x - y).abs() < 1e-12, "{s:?}");
            }
        }
    }

    #[test]
    fn fused_rows_are_distributions() {
        let a = probs(&[vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3]]);
        let b = probs(&[vec![0.1, 0.1, 0.8], vec![0.4, 0.4, 0.2]]);
        for s in [
            FusionStrategy::Max,
            FusionStrategy::Min,
            FusionStrategy::Mean,
            FusionStrategy::Weighted(0.42),
        ] {
            let f = late_fuse_class(&a, &b, &s).unwrap();
            for i in 0..f.rows() {
                let sum: f64 = f.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{s:?} row {i} sums to {sum}");
                assert!(f.row(i).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn logits_are_rejected() {
        let a = probs(&[vec![2.0, -0.5]]);
        let b = probs(&[vec![0.5, 0.5]]);
        assert!(late_fuse_class(&a, &b, &FusionStrategy::Mean).is_err());
    }

    #[test]
    fn va_weighted_worked_example() {
        let a = probs(&[vec![0.5, 0.0]]);
        let b = probs(&[vec![0.0, 0.5]]);
        let f = late_fuse_va(&a, &b, &FusionStrategy::Weighted(0.4)).unwrap();
        assert!((f.get(0, 0) - 0.30).abs() < 1e-12);
        assert!((f.get(0, 1) - 0.20).abs() < 1e-12);
    }

    #[test]
    fn va_elementwise_extrema_and_range_gate() {
        let a = probs(&[vec![0.1, -0.2]]);
        let b = probs(&[vec![0.3, -0.5]]);
        let f = late_fuse_va(&a, &b, &FusionStrategy::Max).unwrap();
        assert_eq!(f.row(0), &[0.3, -0.2]);
        let mean = late_fuse_va(&a, &a, &FusionStrategy::Mean).unwrap();
        assert_eq!(mean.row(0), a.row(0));
        let bad = probs(&[vec![1.5, 0.0]]);
        assert!(late_fuse_va(&bad, &b, &FusionStrategy::Mean).is_err());
    }

    #[test]
    fn sweep_dominant_source_and_tie_break() {
        // b is always right, a always wrong
        let a = probs(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let b = probs(&[vec![0.0, 1.0], vec![0.0, 1.0]]);
        let labels = [1usize, 1];
        let (best, table) = sweep_fusion_weight(
            &a,
            &b,
            &SweepTruth::Labels(&labels),
            &[0.0, 1.0],
            SweepObjective::Accuracy,
        )
        .unwrap();
        assert_eq!(best, 1.0);
        assert_eq!(table.len(), 2);
        // tie: both weights give the same accuracy -> smaller wins
        let (best, _) = sweep_fusion_weight(
            &a,
            &a,
            &SweepTruth::Labels(&[0, 0]),
            &[0.75, 0.25],
            SweepObjective::Accuracy,
        )
        .unwrap();
        assert_eq!(best, 0.25);
    }

    #[test]
    fn sweep_matches_exhaustive_oracle() {
        let mut rng = RngState::seed(99);
        let n = 40;
        let c = 3;
        let draw_probs = |rng: &mut RngState| {
            let mut m = Matrix::zeros(n, c);
            for i in 0..n {
                let mut row: Vec<f64> = (0..c).map(|_| rng.uniform(0.01, 1.0).unwrap()).collect();
                let s: f64 = row.iter().sum();
                for v in row.iter_mut() {
                    *v /= s;
                }
                m.row_mut(i).copy_from_slice(&row);
            }
            m
        };
        let a = draw_probs(&mut rng);
        let b = draw_probs(&mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.index(c)).collect();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let (_, table) = sweep_fusion_weight(
            &a,
            &b,
            &SweepTruth::Labels(&labels),
            &grid,
            SweepObjective::Accuracy,
        )
        .unwrap();
        for row in &table {
            let fused = late_fuse_class(&a, &b, &FusionStrategy::Weighted(row.w)).unwrap();
            let mut correct = 0;
            for (i, &l) in labels.iter().enumerate() {
                let arg = fused
                    .row(i)
                    .iter()
                    .enumerate()
                    .max_by(|(_, x), (_, y)| x.partial_cmp(y).unwrap())
                    .unwrap()
                    .0;
                if arg == l {
                    correct += 1;
                }
            }
            assert_eq!(row.value, correct as f64 / n as f64, "w={}", row.w);
        }
    }

    fn tiny_fusion_model(seed: u64) -> IntermediateFusionModel {
        let cfg = MlpConfig {
            hidden_width: 8,
            dropout: (0.0, 0.0),
            ..Default::default()
        };
        build_intermediate(3, 4, 4, HeadKind::Custom(2), &cfg, RngState::seed(seed)).unwrap()
    }

    #[test]
    fn zero_projection_kills_the_3d_branch() {
        let mut fm = tiny_fusion_model(5);
        fm.set_projection(Matrix::zeros(4, 4), Matrix::zeros(4, 1)).unwrap();
        let f2 = probs(&[vec![0.2, -0.4, 1.0], vec![0.0, 0.5, -0.5]]);
        let f3a = probs(&[vec![1.0, 2.0, 3.0, 4.0], vec![0.1, 0.2, 0.3, 0.4]]);
        let f3b = probs(&[vec![-9.0, 8.0, -7.0, 6.0], vec![5.0, -4.0, 3.0, -2.0]]);
        let ya = fm.forward_eval(&f2, &f3a).unwrap();
        let yb = fm.forward_eval(&f2, &f3b).unwrap();
        assert_eq!(ya, yb);
    }

    #[test]
    fn identity_projection_is_pure_concatenation() {
        let mut fm = tiny_fusion_model(6);
        let mut eye = Matrix::zeros(4, 4);
        for i in 0..4 {
            eye.set(i, i, 1.0);
        }
        fm.set_projection(eye, Matrix::zeros(4, 1)).unwrap();
        let f2 = probs(&[vec![0.2, -0.4, 1.0]]);
        let f3 = probs(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let fused = fm.forward_eval(&f2, &f3).unwrap();
        let concat = Matrix::concat_cols(&f2, &f3).unwrap();
        let direct = fm.classifier().forward_eval(&concat).unwrap();
        assert_eq!(fused, direct);
    }

    #[test]
    fn misaligned_ids_name_the_first_offender() {
        let mut fm = tiny_fusion_model(7);
        let f2 = FeatureSet::new(
            "f2d".into(),
            vec!["a".into(), "b".into()],
            Matrix::zeros(2, 3),
        )
        .unwrap();
        let f3 = FeatureSet::new(
            "f3d".into(),
            vec!["a".into(), "c".into()],
            Matrix::zeros(2, 4),
        )
        .unwrap();
        let err = intermediate_forward(&mut fm, &f2, &f3, Mode::Eval).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"b\"") && msg.contains("\"c\""), "{msg}");
    }

    #[test]
    fn intermediate_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fm = tiny_fusion_model(8);
        let meta = CheckpointMeta {
            epoch: 1,
            best_val_loss: Some(0.5),
            seed: 8,
        };
        let path = dir.path().join("fm.ckpt");
        save_intermediate_checkpoint(&fm, &meta, &path).unwrap();
        let (loaded, meta2) = load_intermediate_checkpoint(&path).unwrap();
        assert_eq!(meta, meta2);
        for ((n1, b1), (n2, b2)) in fm.state_blocks().iter().zip(loaded.state_blocks().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(b1.data(), b2.data(), "block {n1}");
        }
    }
}

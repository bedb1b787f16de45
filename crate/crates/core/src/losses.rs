//! Loss functions with values and gradients: cross-entropy, weighted
//! cross-entropy, MSE, Pearson and concordance correlation, the
//! random-weight composite classification loss, and the two-stage
//! valence-arousal losses.
//!
//! Correlation terms use population (1/N) moments. Valence and arousal are
//! scored per dimension and averaged, which keeps the `w1`/`w2` factors
//! scale-comparable with the correlation terms.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// Per-class positive weights for the weighted cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("class weights must be non-empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Config(format!("class weights must be positive, got {w}")));
        }
        Ok(ClassWeights(weights))
    }

    pub fn uniform(classes: usize) -> Self {
        ClassWeights(vec![1.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inverse-frequency rule `w_c = N / (C * n_c)`.
///
/// Balanced counts give unit weights. A zero count is a configuration
/// error: the class is absent from the training split.
pub fn class_weights_from_counts(counts: &[usize]) -> Result<ClassWeights> {
    if counts.is_empty() {
        return Err(Error::Config("class counts must be non-empty".into()));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!(
            "class {c} has zero training samples; cannot derive a weight"
        )));
    }
    let total: usize = counts.iter().sum();
    let c = counts.len();
    let weights = counts
        .iter()
        .map(|&n| total as f64 / (c as f64 * n as f64))
        .collect();
    ClassWeights::new(weights)
}

/// Random weighting factors of the composite classification loss,
/// resampled per batch from `U(0, 1)`; only their normalized shares enter
/// the loss, so scaling all three by a positive constant changes nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!(
                    "loss weight {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(LossWeights { alpha, beta, gamma })
    }

    /// Draws all three factors from `U(0, 1)`, rejecting exact zeros.
    pub fn sample(rng: &mut RngState) -> Self {
        let draw = |rng: &mut RngState| loop {
            let v = rng.uniform(0.0, 1.0).expect("valid range");
            if v > 0.0 {
                return v;
            }
        };
        LossWeights {
            alpha: draw(rng),
            beta: draw(rng),
            gamma: draw(rng),
        }
    }

    /// Normalized shares `alpha/(alpha+beta+gamma)` etc.; they sum to 1.
    pub fn shares(&self) -> (f64, f64, f64) {
        let s = self.alpha + self.beta + self.gamma;
        (self.alpha / s, self.beta / s, self.gamma / s)
    }
}

/// Configuration for the two-stage valence-arousal losses.
///
/// `ccc_as_one_minus` (the default) reads the concordance term of the
/// stage-2 loss as `1 - CCC`, so that better agreement lowers the loss;
/// setting it to `false` keeps the literal `CCC + w2 * MSE` form.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VaLossConfig {
    pub w1: f64,
    pub w2: f64,
    pub ccc_as_one_minus: bool,
}

impl Default for VaLossConfig {
    fn default() -> Self {
        VaLossConfig {
            w1: 1.0,
            w2: 1.0,
            ccc_as_one_minus: true,
        }
    }
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!(
                "label {l} out of range [0, {classes}) at sample {i}"
            )));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood over the batch, computed with a stable
/// log-sum-exp. Gradient is `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let unit = ClassWeights::uniform(logits.cols());
    weighted_cross_entropy(logits, labels, &unit)
}

/// Cross-entropy with the true-class weight applied per sample, then a
/// plain mean over the batch. Unit weights reproduce
/// [`softmax_cross_entropy`] bit-for-bit.
pub fn weighted_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if n == 0 {
        return Err(Error::Data("cross-entropy on an empty batch".into()));
    }
    check_labels(labels, n, c)?;
    if weights.len() != c {
        return Err(Error::Shape(format!(
            "{} class weights for {c} classes",
            weights.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, c);
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let row = logits.row(i);
        let w = weights.as_slice()[labels[i]];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + sum_exp.ln();
        loss += w * (lse - row[labels[i]]);
        let grow = grad.row_mut(i);
        for j in 0..c {
            let p = (row[j] - lse).exp();
            let indicator = if j == labels[i] { 1.0 } else { 0.0 };
            grow[j] = w * (p - indicator) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

/// Mean of squared differences over every entry; gradient
/// `2 (pred - target) / count`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse: {}x{} vs {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let count = (pred.rows() * pred.cols()) as f64;
    if count == 0.0 {
        return Err(Error::Data("mse on an empty matrix".into()));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data().iter().zip(target.data()))
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}

/// Value plus gradient (with respect to the prediction) of a correlation
/// statistic; `degenerate` marks zero-variance inputs where the sentinel
/// value and a zero gradient are returned instead of NaN.
#[derive(Debug, Clone)]
pub struct CorrOutcome {
    pub value: f64,
    pub grad: Vec<f64>,
    pub degenerate: bool,
}

fn centered(xs: &[f64]) -> (f64, Vec<f64>) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (mean, xs.iter().map(|&x| x - mean).collect())
}

/// Pearson correlation with gradient via the quotient rule on centered
/// sums. Zero variance on either side yields value 0, zero gradient, and
/// the degeneracy flag.
pub fn pcc(pred: &[f64], target: &[f64]) -> Result<CorrOutcome> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "pcc: {} vs {} values",
            pred.len(),
            target.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Data(format!(
            "pcc needs at least 2 values, got {}",
            pred.len()
        )));
    }
    let (_, a) = centered(pred);
    let (_, b) = centered(target);
    let sxx: f64 = a.iter().map(|v| v * v).sum();
    let syy: f64 = b.iter().map(|v| v * v).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(CorrOutcome {
            value: 0.0,
            grad: vec![0.0; pred.len()],
            degenerate: true,
        });
    }
    let sxy: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let denom = (sxx * syy).sqrt();
    let value = (sxy / denom).clamp(-1.0, 1.0);
    let grad = a
        .iter()
        .zip(&b)
        .map(|(&ai, &bi)| (bi - (sxy / sxx) * ai) / denom)
        .collect();
    Ok(CorrOutcome {
        value,
        grad,
        degenerate: false,
    })
}

/// Concordance correlation `2 cov / (var_x + var_y + (mean_x - mean_y)^2)`
/// with population moments. Two constant, equal sequences are defined as
/// perfect agreement (1); constant but different sequences fall out of the
/// formula as 0.
pub fn ccc(pred: &[f64], target: &[f64]) -> Result<CorrOutcome> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "ccc: {} vs {} values",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::Data(format!("ccc needs at least 2 values, got {n}")));
    }
    let nf = n as f64;
    let (mx, a) = centered(pred);
    let (my, b) = centered(target);
    let vx: f64 = a.iter().map(|v| v * v).sum::<f64>() / nf;
    let vy: f64 = b.iter().map(|v| v * v).sum::<f64>() / nf;
    let cxy: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / nf;
    let bias = mx - my;
    let denom = vx + vy + bias * bias;
    if denom == 0.0 {
        return Ok(CorrOutcome {
            value: 1.0,
            grad: vec![0.0; n],
            degenerate: true,
        });
    }
    let value = (2.0 * cxy / denom).clamp(-1.0, 1.0);
    // d(ccc)/dx_j = 2*(y_j - my)/(N*d) - (2*cxy/d^2)*(2*(x_j - mx) + 2*(mx - my))/N
    let grad = a
        .iter()
        .zip(&b)
        .map(|(&ai, &bi)| {
            2.0 * bi / (nf * denom) - (2.0 * cxy / (denom * denom)) * (2.0 * ai + 2.0 * bias) / nf
        })
        .collect();
    Ok(CorrOutcome {
        value,
        grad,
        degenerate: false,
    })
}

/// Gradients of a composite loss with a classification head and a
/// valence-arousal head.
#[derive(Debug, Clone)]
pub struct SplitGrads {
    pub logits: Matrix,
    pub va: Matrix,
}

fn check_va_pair(va_pred: &Matrix, va_target: &Matrix) -> Result<()> {
    if va_pred.shape() != va_target.shape() {
        return Err(Error::Shape(format!(
            "va: {}x{} vs {}x{}",
            va_pred.rows(),
            va_pred.cols(),
            va_target.rows(),
            va_target.cols()
        )));
    }
    if va_pred.cols() != 2 {
        return Err(Error::Shape(format!(
            "va matrices must have 2 columns (valence, arousal), got {}",
            va_pred.cols()
        )));
    }
    Ok(())
}

/// Per-dimension MSE, CCC, PCC of a valence-arousal pair, averaged across
/// the two dimensions, with the matching gradient contribution.
struct VaTerms {
    mse: f64,
    mse_grad: Matrix,
    mean_ccc: f64,
    ccc_grads: [Vec<f64>; 2],
    mean_pcc: f64,
    pcc_grads: [Vec<f64>; 2],
}

fn va_terms(va_pred: &Matrix, va_target: &Matrix) -> Result<VaTerms> {
    let (mse, mse_grad) = mse_loss(va_pred, va_target)?;
    let mut ccc_vals = [0.0; 2];
    let mut pcc_vals = [0.0; 2];
    let mut ccc_grads: [Vec<f64>; 2] = [vec![], vec![]];
    let mut pcc_grads: [Vec<f64>; 2] = [vec![], vec![]];
    for dim in 0..2 {
        let p = va_pred.column(dim);
        let t = va_target.column(dim);
        let c = ccc(&p, &t)?;
        let r = pcc(&p, &t)?;
        ccc_vals[dim] = c.value;
        pcc_vals[dim] = r.value;
        ccc_grads[dim] = c.grad;
        pcc_grads[dim] = r.grad;
    }
    Ok(VaTerms {
        mse,
        mse_grad,
        mean_ccc: (ccc_vals[0] + ccc_vals[1]) / 2.0,
        ccc_grads,
        mean_pcc: (pcc_vals[0] + pcc_vals[1]) / 2.0,
        pcc_grads,
    })
}

/// Composite classification loss:
/// `CE + a*MSE + b*(1 - CCC) + c*(1 - PCC)` where `a`, `b`, `c` are the
/// normalized shares of the sampled weighting factors and the regression
/// terms are averaged over the valence and arousal dimensions.
pub fn combined_affectnet_loss(
    logits: &Matrix,
    va_pred: &Matrix,
    labels: &[usize],
    va_target: &Matrix,
    w: &LossWeights,
) -> Result<(f64, SplitGrads)> {
    check_va_pair(va_pred, va_target)?;
    if va_pred.rows() != logits.rows() {
        return Err(Error::Shape(format!(
            "logits have {} rows but va predictions have {}",
            logits.rows(),
            va_pred.rows()
        )));
    }
    if va_pred.rows() < 2 {
        return Err(Error::Data(
            "combined loss needs a batch of at least 2 samples (CCC/PCC undefined)".into(),
        ));
    }
    LossWeights::new(w.alpha, w.beta, w.gamma)?;
    let (sa, sb, sc) = w.shares();
    let (ce, ce_grad) = softmax_cross_entropy(logits, labels)?;
    let t = va_terms(va_pred, va_target)?;
    let loss = ce + sa * t.mse + sb * (1.0 - t.mean_ccc) + sc * (1.0 - t.mean_pcc);
    let mut va_grad = t.mse_grad.scale(sa);
    for dim in 0..2 {
        for i in 0..va_grad.rows() {
            let g = va_grad.get(i, dim)
                - sb * t.ccc_grads[dim][i] / 2.0
                - sc * t.pcc_grads[dim][i] / 2.0;
            va_grad.set(i, dim, g);
        }
    }
    Ok((
        loss,
        SplitGrads {
            logits: ce_grad,
            va: va_grad,
        },
    ))
}

/// Stage-1 loss of the two-stage valence-arousal protocol:
/// weighted cross-entropy plus `w1 * MSE` on the VA head.
pub fn stage1_combined_loss(
    logits: &Matrix,
    va_pred: &Matrix,
    labels: &[usize],
    va_target: &Matrix,
    class_weights: &ClassWeights,
    cfg: &VaLossConfig,
) -> Result<(f64, SplitGrads)> {
    check_va_pair(va_pred, va_target)?;
    if va_pred.rows() != logits.rows() {
        return Err(Error::Shape(format!(
            "logits have {} rows but va predictions have {}",
            logits.rows(),
            va_pred.rows()
        )));
    }
    let (wce, wce_grad) = weighted_cross_entropy(logits, labels, class_weights)?;
    let (mse, mse_grad) = mse_loss(va_pred, va_target)?;
    Ok((
        wce + cfg.w1 * mse,
        SplitGrads {
            logits: wce_grad,
            va: mse_grad.scale(cfg.w1),
        },
    ))
}

/// Stage-2 valence-arousal loss: the concordance term (by default
/// `1 - CCC`, averaged over the two dimensions) plus `w2 * MSE`.
pub fn stage2_va_loss(
    va_pred: &Matrix,
    va_target: &Matrix,
    cfg: &VaLossConfig,
) -> Result<(f64, Matrix)> {
    check_va_pair(va_pred, va_target)?;
    if va_pred.rows() < 2 {
        return Err(Error::Data(
            "stage-2 va loss needs a batch of at least 2 samples (CCC undefined)".into(),
        ));
    }
    let (mse, mse_grad) = mse_loss(va_pred, va_target)?;
    let mut ccc_sum = 0.0;
    let mut grad = mse_grad.scale(cfg.w2);
    let sign = if cfg.ccc_as_one_minus { -1.0 } else { 1.0 };
    for dim in 0..2 {
        let p = va_pred.column(dim);
        let t = va_target.column(dim);
        let c = ccc(&p, &t)?;
        ccc_sum += c.value;
        for i in 0..grad.rows() {
            let g = grad.get(i, dim) + sign * c.grad[i] / 2.0;
            grad.set(i, dim, g);
        }
    }
    let mean_ccc = ccc_sum / 2.0;
    let concordance_term = if cfg.ccc_as_one_minus {
        1.0 - mean_ccc
    } else {
        mean_ccc
    };
    Ok((concordance_term + cfg.w2 * mse, grad))
}

/// Targets of one batch: class labels and/or a regression target matrix
/// (valence-arousal pairs in production use).
#[derive(Debug, Clone, Default)]
pub struct BatchTargets {
    pub labels: Option<Vec<usize>>,
    pub va: Option<Matrix>,
}

impl BatchTargets {
    fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data("loss requires class labels".into()))
    }

    fn va(&self) -> Result<&Matrix> {
        self.va
            .as_ref()
            .ok_or_else(|| Error::Data("loss requires valence-arousal targets".into()))
    }
}

/// A loss applied to raw model outputs, dispatching on the head layout.
///
/// Composite variants expect the classification logits in the leading
/// columns and the two VA columns at the end of the output matrix.
#[derive(Debug, Clone)]
pub enum LossKind {
    Mse,
    CrossEntropy,
    WeightedCe(ClassWeights),
    Composite(LossWeights),
    Stage1(ClassWeights, VaLossConfig),
    Stage2(VaLossConfig),
}

impl LossKind {
    /// Evaluates the loss on raw head outputs, returning the value and the
    /// gradient with respect to the full output matrix.
    pub fn eval(&self, output: &Matrix, targets: &BatchTargets) -> Result<(f64, Matrix)> {
        match self {
            LossKind::Mse => mse_loss(output, targets.va()?),
            LossKind::CrossEntropy => softmax_cross_entropy(output, targets.labels()?),
            LossKind::WeightedCe(w) => weighted_cross_entropy(output, targets.labels()?, w),
            LossKind::Composite(w) => {
                let (logits, va_pred) = split_head(output)?;
                let (loss, grads) = combined_affectnet_loss(
                    &logits,
                    &va_pred,
                    targets.labels()?,
                    targets.va()?,
                    w,
                )?;
                Ok((loss, Matrix::concat_cols(&grads.logits, &grads.va)?))
            }
            LossKind::Stage1(cw, cfg) => {
                let (logits, va_pred) = split_head(output)?;
                let (loss, grads) = stage1_combined_loss(
                    &logits,
                    &va_pred,
                    targets.labels()?,
                    targets.va()?,
                    cw,
                    cfg,
                )?;
                Ok((loss, Matrix::concat_cols(&grads.logits, &grads.va)?))
            }
            LossKind::Stage2(cfg) => stage2_va_loss(output, targets.va()?, cfg),
        }
    }
}

/// Row-wise softmax with the usual max-shift for stability.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn split_head(output: &Matrix) -> Result<(Matrix, Matrix)> {
    if output.cols() < 3 {
        return Err(Error::Shape(format!(
            "combined head needs class logits plus 2 va columns, got {} columns",
            output.cols()
        )));
    }
    output.split_cols(output.cols() - 2)
}

//! Evaluation battery: accuracy, precision, recall, F1 in weighted and
//! macro averaging for classification; MSE, MAE, RMSE, CCC per
//! valence-arousal dimension for regression.
//!
//! Per-class metrics are exact integer ratios (`P = TP/pred`, `R = TP/n`,
//! `F1 = 2TP/(pred+n)`), so the averages are accumulated as exact u128
//! rationals and converted to f64 once. That makes the algebraic
//! identities hold bit-for-bit: weighted recall equals accuracy, and
//! macro equals weighted whenever all supports are equal. Undefined
//! (zero-denominator) values are reported as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ccc;
use crate::numerics::Matrix;

/// C x C counts; rows index the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class * self.classes + pred_class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Per-class true-label counts (row sums).
    pub fn supports(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|t| (0..self.classes).map(|p| self.get(t, p)).sum())
            .collect()
    }

    /// Per-class predicted counts (column sums).
    pub fn predicted_counts(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|p| (0..self.classes).map(|t| self.get(t, p)).sum())
            .collect()
    }
}

/// Counts `(true, predicted)` pairs into a confusion matrix.
pub fn confusion(true_labels: &[usize], pred_labels: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::Shape(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    if classes == 0 {
        return Err(Error::Config("confusion matrix needs at least one class".into()));
    }
    let mut counts = vec![0u64; classes * classes];
    for (i, (&t, &p)) in true_labels.iter().zip(pred_labels).enumerate() {
        if t >= classes || p >= classes {
            return Err(Error::Data(format!(
                "label out of range [0, {classes}) at sample {i}: true {t}, predicted {p}"
            )));
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// How classes with no true and no predicted samples enter the macro
/// average: counted as zeros (the default) or excluded entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacroPolicy {
    #[default]
    IncludeAll,
    ExcludeAbsent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_avg: AvgMetrics,
    pub macro_avg: AvgMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDim {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub ccc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub valence: RegressionDim,
    pub arousal: RegressionDim,
    pub mean: RegressionDim,
}

/// The full metric battery of one evaluation run; either side may be
/// absent depending on what the predictions carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionReport>,
}

/// Exact non-negative rational on u128, gcd-reduced after every step.
/// Falls back to `None` on overflow; callers then recompute in f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: u128,
    den: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    fn zero() -> Ratio {
        Ratio { num: 0, den: 1 }
    }

    /// `num/den`, with the 0/0 convention mapping to 0.
    fn new(num: u128, den: u128) -> Ratio {
        if den == 0 || num == 0 {
            return Ratio::zero();
        }
        let g = gcd(num, den);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    fn add(self, other: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, other.den);
        let lhs_scale = other.den / g;
        let rhs_scale = self.den / g;
        let num = self
            .num
            .checked_mul(lhs_scale)?
            .checked_add(other.num.checked_mul(rhs_scale)?)?;
        let den = self.den.checked_mul(lhs_scale)?;
        Some(Ratio::new(num, den))
    }

    fn mul_int(self, k: u128) -> Option<Ratio> {
        Some(Ratio::new(self.num.checked_mul(k)?, self.den))
    }

    fn div_int(self, k: u128) -> Option<Ratio> {
        if k == 0 {
            return Some(Ratio::zero());
        }
        Some(Ratio::new(self.num, self.den.checked_mul(k)?))
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

struct ClassCounts {
    tp: u64,
    support: u64,
    predicted: u64,
}

impl ClassCounts {
    fn precision(&self) -> Ratio {
        Ratio::new(self.tp as u128, self.predicted as u128)
    }

    fn recall(&self) -> Ratio {
        Ratio::new(self.tp as u128, self.support as u128)
    }

    fn f1(&self) -> Ratio {
        // 2PR/(P+R) collapses to 2TP/(pred+support).
        Ratio::new(2 * self.tp as u128, (self.predicted + self.support) as u128)
    }

    fn absent(&self) -> bool {
        self.support == 0 && self.predicted == 0
    }
}

/// Averages exact per-class ratios; `weights` are integer numerators over
/// the common denominator `weight_total`. Falls back to f64 accumulation
/// if the exact path overflows u128.
fn average(values: &[Ratio], weights: &[u128], weight_total: u128) -> f64 {
    let exact = || -> Option<Ratio> {
        let mut acc = Ratio::zero();
        for (v, &w) in values.iter().zip(weights) {
            acc = acc.add(v.mul_int(w)?)?;
        }
        acc.div_int(weight_total)
    };
    match exact() {
        Some(r) => r.to_f64(),
        None => {
            if weight_total == 0 {
                return 0.0;
            }
            values
                .iter()
                .zip(weights)
                .map(|(v, &w)| v.to_f64() * (w as f64 / weight_total as f64))
                .sum()
        }
    }
}

/// Classification metrics with the default macro policy (absent classes
/// contribute zeros).
pub fn classification_report(
    true_labels: &[usize],
    pred_labels: &[usize],
    classes: usize,
) -> Result<ClassificationReport> {
    classification_report_with(true_labels, pred_labels, classes, MacroPolicy::IncludeAll)
}

pub fn classification_report_with(
    true_labels: &[usize],
    pred_labels: &[usize],
    classes: usize,
    policy: MacroPolicy,
) -> Result<ClassificationReport> {
    let cm = confusion(true_labels, pred_labels, classes)?;
    let n = cm.total();
    if n == 0 {
        return Err(Error::Data("classification report on an empty sample set".into()));
    }
    let supports = cm.supports();
    let predicted = cm.predicted_counts();
    let counts: Vec<ClassCounts> = (0..classes)
        .map(|c| ClassCounts {
            tp: cm.get(c, c),
            support: supports[c],
            predicted: predicted[c],
        })
        .collect();

    let precisions: Vec<Ratio> = counts.iter().map(|c| c.precision()).collect();
    let recalls: Vec<Ratio> = counts.iter().map(|c| c.recall()).collect();
    let f1s: Vec<Ratio> = counts.iter().map(|c| c.f1()).collect();

    let per_class = counts
        .iter()
        .enumerate()
        .map(|(c, cc)| ClassMetrics {
            precision: precisions[c].to_f64(),
            recall: recalls[c].to_f64(),
            f1: f1s[c].to_f64(),
            support: cc.support,
        })
        .collect();

    let support_weights: Vec<u128> = counts.iter().map(|c| c.support as u128).collect();
    let weighted_avg = AvgMetrics {
        precision: average(&precisions, &support_weights, n as u128),
        recall: average(&recalls, &support_weights, n as u128),
        f1: average(&f1s, &support_weights, n as u128),
    };

    let macro_weights: Vec<u128> = match policy {
        MacroPolicy::IncludeAll => vec![1; classes],
        MacroPolicy::ExcludeAbsent => counts
            .iter()
            .map(|c| if c.absent() { 0 } else { 1 })
            .collect(),
    };
    let macro_total: u128 = macro_weights.iter().sum();
    let macro_avg = AvgMetrics {
        precision: average(&precisions, &macro_weights, macro_total),
        recall: average(&recalls, &macro_weights, macro_total),
        f1: average(&f1s, &macro_weights, macro_total),
    };

    Ok(ClassificationReport {
        accuracy: cm.trace() as f64 / n as f64,
        per_class,
        weighted_avg,
        macro_avg,
    })
}

/// Regression metrics over `(N x 2)` valence-arousal predictions. Metrics
/// are computed over the global sample set, never batch-averaged.
pub fn regression_report(pred: &Matrix, target: &Matrix) -> Result<RegressionReport> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "regression report: {}x{} vs {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    if pred.cols() != 2 {
        return Err(Error::Shape(format!(
            "regression report expects 2 columns (valence, arousal), got {}",
            pred.cols()
        )));
    }
    if pred.rows() < 2 {
        return Err(Error::Data(format!(
            "regression report needs at least 2 samples (CCC undefined), got {}",
            pred.rows()
        )));
    }
    let mut dims = Vec::with_capacity(2);
    for d in 0..2 {
        let p = pred.column(d);
        let t = target.column(d);
        let n = p.len() as f64;
        let mut se = 0.0;
        let mut ae = 0.0;
        for (&x, &y) in p.iter().zip(&t) {
            let diff = x - y;
            se += diff * diff;
            ae += diff.abs();
        }
        let mse = se / n;
        dims.push(RegressionDim {
            mse,
            mae: ae / n,
            rmse: mse.sqrt(),
            ccc: ccc(&p, &t)?.value,
        });
    }
    let mean = RegressionDim {
        mse: (dims[0].mse + dims[1].mse) / 2.0,
        mae: (dims[0].mae + dims[1].mae) / 2.0,
        rmse: (dims[0].rmse + dims[1].rmse) / 2.0,
        ccc: (dims[0].ccc + dims[1].ccc) / 2.0,
    };
    Ok(RegressionReport {
        valence: dims[0].clone(),
        arousal: dims[1].clone(),
        mean,
    })
}

impl MetricsReport {
    pub fn classification_only(report: ClassificationReport) -> Self {
        MetricsReport {
            classification: Some(report),
            regression: None,
        }
    }

    pub fn regression_only(report: RegressionReport) -> Self {
        MetricsReport {
            classification: None,
            regression: Some(report),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table in the evaluation-table column order:
    /// Accuracy | F1 | Precision | Recall (weighted then macro) for
    /// classification, and MSE | MAE | RMSE | CCC for regression.
    pub fn render_table(&self, name: &str) -> String {
        let mut out = String::new();
        if let Some(c) = &self.classification {
            out.push_str(&format!(
                "{:<28} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
                "framework", "acc", "f1_w", "p_w", "r_w", "f1_m", "p_m", "r_m"
            ));
            out.push_str(&format!(
                "{:<28} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                name,
                c.accuracy,
                c.weighted_avg.f1,
                c.weighted_avg.precision,
                c.weighted_avg.recall,
                c.macro_avg.f1,
                c.macro_avg.precision,
                c.macro_avg.recall
            ));
            out.push('\n');
            out.push_str(&format!(
                "{:<10} {:>10} {:>10} {:>10} {:>10}\n",
                "class", "precision", "recall", "f1", "support"
            ));
            for (i, m) in c.per_class.iter().enumerate() {
                out.push_str(&format!(
                    "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10}\n",
                    i, m.precision, m.recall, m.f1, m.support
                ));
            }
        }
        if let Some(r) = &self.regression {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!(
                "{:<12} {:>8} {:>8} {:>8} {:>8}\n",
                "dimension", "mse", "mae", "rmse", "ccc"
            ));
            for (label, d) in [
                ("valence", &r.valence),
                ("arousal", &r.arousal),
                ("mean", &r.mean),
            ] {
                out.push_str(&format!(
                    "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                    label, d.mse, d.mae, d.rmse, d.ccc
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    #[test]
    fn exact_identities_survive_production_scale() {
        // large coprime-ish supports push the exact accumulator toward its
        // u128 limits; the weighted-recall/accuracy identity must hold
        // bit-for-bit either way, and every average must stay within
        // rounding of a plain f64 evaluation.
        let mut rng = RngState::seed(314);
        let classes = 8;
        let supports = [36_791, 65_537, 49_999, 99_991, 28_657, 75_011, 60_013, 81_001];
        let mut truth = Vec::new();
        for (c, &n) in supports.iter().enumerate() {
            truth.extend(std::iter::repeat_n(c, n));
        }
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.uniform(0.0, 1.0).unwrap() < 0.7 { t } else { rng.index(classes) })
            .collect();
        let r = classification_report(&truth, &pred, classes).unwrap();
        assert_eq!(r.weighted_avg.recall.to_bits(), r.accuracy.to_bits());
        // plain f64 oracle
        let n = truth.len() as f64;
        let mut weighted_f1 = 0.0;
        let mut macro_f1 = 0.0;
        for (c, &support_n) in supports.iter().enumerate() {
            let tp = truth.iter().zip(&pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
            let predicted = pred.iter().filter(|p| **p == c).count() as f64;
            let support = support_n as f64;
            let f1 = if predicted + support > 0.0 { 2.0 * tp / (predicted + support) } else { 0.0 };
            weighted_f1 += f1 * support / n;
            macro_f1 += f1 / classes as f64;
        }
        assert!((r.weighted_avg.f1 - weighted_f1).abs() < 1e-12);
        assert!((r.macro_avg.f1 - macro_f1).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_are_all_ones() {
        let labels = [0usize, 1, 2, 1, 0];
        let r = classification_report(&labels, &labels, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.weighted_avg.f1, 1.0);
        assert_eq!(r.macro_avg.recall, 1.0);
        for m in &r.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn worked_three_sample_case() {
        // class 0: P=1, R=1/2, F1=2/3; class 1: P=1/2, R=1, F1=2/3
        let r = classification_report(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[1].precision, 0.5);
        assert_eq!(r.per_class[1].recall, 1.0);
        assert!((r.macro_avg.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.weighted_avg.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_supports_make_macro_equal_weighted() {
        // 3 samples per class, deliberately awkward counts
        let true_labels = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        let pred_labels = [0, 1, 2, 1, 1, 0, 2, 0, 1];
        let r = classification_report(&true_labels, &pred_labels, 3).unwrap();
        assert_eq!(r.macro_avg.precision.to_bits(), r.weighted_avg.precision.to_bits());
        assert_eq!(r.macro_avg.recall.to_bits(), r.weighted_avg.recall.to_bits());
        assert_eq!(r.macro_avg.f1.to_bits(), r.weighted_avg.f1.to_bits());
    }

    #[test]
    fn weighted_recall_is_accuracy_exactly() {
        let true_labels = [0, 0, 0, 0, 0, 0, 0, 1, 1, 2, 2, 2, 2, 1];
        let pred_labels = [0, 1, 2, 0, 0, 1, 0, 1, 0, 2, 2, 1, 0, 1];
        let r = classification_report(&true_labels, &pred_labels, 3).unwrap();
        assert_eq!(r.weighted_avg.recall.to_bits(), r.accuracy.to_bits());
    }

    #[test]
    fn absent_class_contributes_zeros_by_default() {
        // class 2 never true, never predicted
        let r = classification_report(&[0, 1, 0], &[0, 1, 1], 3).unwrap();
        assert_eq!(r.per_class[2].support, 0);
        assert_eq!(r.per_class[2].precision, 0.0);
        assert_eq!(r.per_class[2].recall, 0.0);
        assert_eq!(r.per_class[2].f1, 0.0);
        // excluded-absent macro averages over the two live classes only
        let incl = r.macro_avg.recall;
        let excl = classification_report_with(&[0, 1, 0], &[0, 1, 1], 3, MacroPolicy::ExcludeAbsent)
            .unwrap()
            .macro_avg
            .recall;
        assert!(excl > incl);
    }

    #[test]
    fn accuracy_is_trace_over_n() {
        let true_labels = [0usize, 1, 1, 0, 2];
        let pred_labels = [0usize, 1, 0, 0, 1];
        let cm = confusion(&true_labels, &pred_labels, 3).unwrap();
        let r = classification_report(&true_labels, &pred_labels, 3).unwrap();
        assert_eq!(r.accuracy, cm.trace() as f64 / cm.total() as f64);
    }

    #[test]
    fn confusion_shapes_and_conservation() {
        let cm = confusion(&[0, 0, 1], &[0, 0, 0], 2).unwrap();
        assert_eq!(cm.get(0, 0), 2);
        assert_eq!(cm.get(1, 0), 1);
        assert_eq!(cm.get(1, 1), 0);
        assert_eq!(cm.total(), 3);
        assert_eq!(cm.supports(), vec![2, 1]);
        // all predicted class 0: single nonzero column
        assert_eq!(cm.predicted_counts(), vec![3, 0]);
    }

    #[test]
    fn confusion_rejects_bad_labels() {
        assert!(confusion(&[0, 3], &[0, 0], 2).is_err());
        assert!(confusion(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn regression_identity_and_unit_offsets() {
        let t = Matrix::from_rows(&[vec![0.1, -0.2], vec![0.5, 0.3], vec![-0.4, 0.8]]).unwrap();
        let r = regression_report(&t, &t).unwrap();
        assert_eq!(r.valence.mse, 0.0);
        assert_eq!(r.arousal.mae, 0.0);
        assert_eq!(r.mean.rmse, 0.0);
        assert_eq!(r.valence.ccc, 1.0);

        let pred = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let target = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = regression_report(&pred, &target).unwrap();
        assert_eq!(r.valence.mse, 1.0);
        assert_eq!(r.valence.rmse, 1.0);
        assert_eq!(r.valence.mae, 1.0);
    }

    #[test]
    fn regression_matches_brute_force() {
        let pred =
            Matrix::from_rows(&[vec![0.3, -0.1], vec![0.7, 0.2], vec![-0.5, 0.9], vec![0.0, 0.4], vec![0.2, -0.8]])
                .unwrap();
        let target =
            Matrix::from_rows(&[vec![0.1, 0.0], vec![0.6, 0.1], vec![-0.2, 0.7], vec![0.1, 0.2], vec![0.4, -0.9]])
                .unwrap();
        let r = regression_report(&pred, &target).unwrap();
        for d in 0..2 {
            let p = pred.column(d);
            let t = target.column(d);
            let n = p.len() as f64;
            let mse: f64 = p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            let mae: f64 = p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let dim = if d == 0 { &r.valence } else { &r.arousal };
            assert!((dim.mse - mse).abs() < 1e-15);
            assert!((dim.mae - mae).abs() < 1e-15);
            assert!((dim.rmse - mse.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn regression_rejects_single_sample() {
        let m = Matrix::zeros(1, 2);
        assert!(regression_report(&m, &m).is_err());
    }

    #[test]
    fn report_serializes_and_renders() {
        let r = classification_report(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let report = MetricsReport::classification_only(r);
        let json = report.to_json_pretty();
        assert!(json.contains("\"accuracy\""));
        let parsed: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, report);
        let table = report.render_table("test_model");
        assert!(table.contains("acc"));
        assert!(table.contains("test_model"));
    }
}

//! Prediction and feature files: the late-fusion currency.
//!
//! Predictions arrive as CSV `id,p0..p{C-1}[,valence,arousal]` (either
//! block optional, at least one present) or the JSON-lines equivalent
//! `{"id": ..., "probs": [...], "va": [v, a]}`, selected by a `.jsonl`
//! extension. Probability rows must sum to 1 within 1e-6 and are then
//! renormalized exactly, so downstream fusion sees rows summing to 1 at
//! full precision. Logit inputs are converted with a row softmax when the
//! caller passes `from_logits`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::losses::softmax_rows;
use crate::numerics::Matrix;

/// Per-sample class probabilities and/or valence-arousal estimates from
/// any model (2D or 3D side).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub source: String,
    pub ids: Vec<String>,
    pub probs: Option<Matrix>,
    pub va: Option<Matrix>,
}

impl PredictionSet {
    pub fn new(
        source: String,
        ids: Vec<String>,
        probs: Option<Matrix>,
        va: Option<Matrix>,
    ) -> Result<Self> {
        let n = ids.len();
        if probs.is_none() && va.is_none() {
            return Err(Error::Data(
                "prediction set carries neither probabilities nor valence/arousal".into(),
            ));
        }
        if let Some(p) = &probs {
            if p.rows() != n {
                return Err(Error::Shape(format!(
                    "{} probability rows for {n} ids",
                    p.rows()
                )));
            }
        }
        if let Some(v) = &va {
            if v.rows() != n || v.cols() != 2 {
                return Err(Error::Shape(format!(
                    "va block must be {n}x2, got {}x{}",
                    v.rows(),
                    v.cols()
                )));
            }
            for (i, row) in (0..v.rows()).map(|i| (i, v.row(i))) {
                for &x in row {
                    if !(-1.0..=1.0).contains(&x) {
                        return Err(Error::Data(format!(
                            "va value {x} outside [-1, 1] at sample {i}"
                        )));
                    }
                }
            }
        }
        let mut seen = HashMap::new();
        for (i, id) in ids.iter().enumerate() {
            if let Some(first) = seen.insert(id.clone(), i) {
                return Err(Error::Data(format!(
                    "duplicate id {id:?} at samples {first} and {i}"
                )));
            }
        }
        Ok(PredictionSet {
            source,
            ids,
            probs,
            va,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn classes(&self) -> Option<usize> {
        self.probs.as_ref().map(|p| p.cols())
    }

    /// Argmax class per row.
    pub fn predicted_labels(&self) -> Result<Vec<usize>> {
        let p = self
            .probs
            .as_ref()
            .ok_or_else(|| Error::Data("prediction set has no class probabilities".into()))?;
        Ok((0..p.rows())
            .map(|i| {
                p.row(i)
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                    .map(|(j, _)| j)
                    .unwrap_or(0)
            })
            .collect())
    }

    /// Reorders/filters samples by index list (used after id alignment).
    pub fn take(&self, indices: &[usize]) -> PredictionSet {
        PredictionSet {
            source: self.source.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            probs: self.probs.as_ref().map(|p| p.take_rows(indices)),
            va: self.va.as_ref().map(|v| v.take_rows(indices)),
        }
    }
}

/// Validates a probability row against the 1e-6 budget and renormalizes it
/// exactly. Entries more negative than -1e-9 are rejected; tiny negative
/// rounding noise is clamped to zero.
fn normalize_row(row: &mut [f64], line: usize) -> Result<()> {
    let mut sum = 0.0;
    for v in row.iter_mut() {
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite probability {v}"),
            });
        }
        if *v < -1e-9 {
            return Err(Error::Parse {
                line,
                message: format!("negative probability {v}"),
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
        sum += *v;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Parse {
            line,
            message: format!(
                "probability row sums to {sum}, more than 1e-6 away from 1 (pass logits with --from-logits)"
            ),
        });
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: String,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    va: Option<[f64; 2]>,
}

/// Loads a prediction set; `from_logits` applies a row softmax to the
/// class block instead of requiring normalized rows.
pub fn load_predictions(path: &Path, from_logits: bool) -> Result<PredictionSet> {
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "predictions".into());
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        parse_predictions_jsonl(&text, source, from_logits)
    } else {
        parse_predictions_csv(&text, source, from_logits)
    }
}

fn parse_predictions_csv(text: &str, source: String, from_logits: bool) -> Result<PredictionSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty prediction file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.is_empty() || cols[0] != "id" {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with id".into(),
        });
    }
    let mut classes = 0;
    while 1 + classes < cols.len() && cols[1 + classes] == format!("p{classes}") {
        classes += 1;
    }
    let rest = &cols[1 + classes..];
    let has_va = match rest {
        [] => false,
        ["valence", "arousal"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header must be id,p0..p{{C-1}}[,valence,arousal]; unexpected columns {rest:?}"
                ),
            })
        }
    };
    if classes == 0 && !has_va {
        return Err(Error::Parse {
            line: 1,
            message: "prediction file carries neither probability nor va columns".into(),
        });
    }

    let mut ids = Vec::new();
    let mut prob_data: Vec<f64> = Vec::new();
    let mut va_data: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        ids.push(fields[0].to_string());
        let mut row = Vec::with_capacity(classes);
        for f in &fields[1..1 + classes] {
            row.push(super::parse_float(f, line_no, "probability")?);
        }
        if classes > 0 {
            if from_logits {
                let m = Matrix::from_vec(1, classes, row)?;
                row = softmax_rows(&m).data().to_vec();
            } else {
                normalize_row(&mut row, line_no)?;
            }
            prob_data.extend_from_slice(&row);
        }
        if has_va {
            for f in &fields[1 + classes..] {
                va_data.push(super::parse_float(f, line_no, "va")?);
            }
        }
    }
    let n = ids.len();
    let probs = if classes > 0 {
        Some(Matrix::from_vec(n, classes, prob_data)?)
    } else {
        None
    };
    let va = if has_va {
        Some(Matrix::from_vec(n, 2, va_data)?)
    } else {
        None
    };
    PredictionSet::new(source, ids, probs, va)
}

fn parse_predictions_jsonl(text: &str, source: String, from_logits: bool) -> Result<PredictionSet> {
    let mut ids = Vec::new();
    let mut prob_rows: Vec<Vec<f64>> = Vec::new();
    let mut va_rows: Vec<[f64; 2]> = Vec::new();
    let mut classes: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("invalid json record: {e}"),
        })?;
        ids.push(rec.id);
        if let Some(mut row) = rec.probs {
            match classes {
                None => classes = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("probability row has {} entries, expected {c}", row.len()),
                    })
                }
                _ => {}
            }
            if from_logits {
                let m = Matrix::from_vec(1, row.len(), row)?;
                row = softmax_rows(&m).data().to_vec();
            } else {
                normalize_row(&mut row, line_no)?;
            }
            prob_rows.push(row);
        }
        if let Some(va) = rec.va {
            va_rows.push(va);
        }
    }
    let n = ids.len();
    let probs = match classes {
        Some(c) => {
            if prob_rows.len() != n {
                return Err(Error::Data(format!(
                    "{} of {n} records carry probabilities; the block must be uniform",
                    prob_rows.len()
                )));
            }
            Some(Matrix::from_vec(
                n,
                c,
                prob_rows.into_iter().flatten().collect(),
            )?)
        }
        None => None,
    };
    let va = if va_rows.is_empty() {
        None
    } else {
        if va_rows.len() != n {
            return Err(Error::Data(format!(
                "{} of {n} records carry va; the block must be uniform",
                va_rows.len()
            )));
        }
        Some(Matrix::from_vec(
            n,
            2,
            va_rows.into_iter().flatten().collect(),
        )?)
    };
    PredictionSet::new(source, ids, probs, va)
}

/// Writes the CSV form with shortest round-trip float printing.
pub fn save_predictions_csv(ps: &PredictionSet, path: &Path) -> Result<()> {
    let mut out = String::from("id");
    if let Some(c) = ps.classes() {
        for j in 0..c {
            out.push_str(&format!(",p{j}"));
        }
    }
    if ps.va.is_some() {
        out.push_str(",valence,arousal");
    }
    out.push('\n');
    for i in 0..ps.len() {
        if ps.ids[i].contains(',') {
            return Err(Error::Data(format!(
                "id {:?} contains a comma and cannot be written as CSV",
                ps.ids[i]
            )));
        }
        out.push_str(&ps.ids[i]);
        if let Some(p) = &ps.probs {
            for &x in p.row(i) {
                out.push_str(&format!(",{x}"));
            }
        }
        if let Some(v) = &ps.va {
            out.push_str(&format!(",{},{}", v.get(i, 0), v.get(i, 1)));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Feature vectors of one source, aligned by id; the input side of
/// intermediate fusion. CSV form: `id,f0..f{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub source: String,
    pub ids: Vec<String>,
    pub features: Matrix,
}

impl FeatureSet {
    pub fn new(source: String, ids: Vec<String>, features: Matrix) -> Result<Self> {
        if features.rows() != ids.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} ids",
                features.rows(),
                ids.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, id) in ids.iter().enumerate() {
            if let Some(first) = seen.insert(id.clone(), i) {
                return Err(Error::Data(format!(
                    "duplicate id {id:?} at samples {first} and {i}"
                )));
            }
        }
        Ok(FeatureSet {
            source,
            ids,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn take(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            source: self.source.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            features: self.features.take_rows(indices),
        }
    }
}

pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "features".into());
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty feature file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "id" || !cols[1].starts_with('f') {
        return Err(Error::Parse {
            line: 1,
            message: "header must be id,f0..f{d-1}".into(),
        });
    }
    let dim = cols.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        ids.push(fields[0].to_string());
        for f in &fields[1..] {
            data.push(super::parse_float(f, line_no, "feature")?);
        }
    }
    let n = ids.len();
    FeatureSet::new(source, ids, Matrix::from_vec(n, dim, data)?)
}

pub fn save_features(fs: &FeatureSet, path: &Path) -> Result<()> {
    let mut out = String::from("id");
    for j in 0..fs.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for i in 0..fs.len() {
        out.push_str(&fs.ids[i]);
        for &x in fs.features.row(i) {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

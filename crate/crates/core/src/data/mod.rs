//! Dataset and prediction file formats, ingestion, validation, and
//! class-frequency statistics.
//!
//! The canonical dataset CSV is
//!
//! ```text
//! # fei3d-dataset v1 label_space=affect8
//! id,label,valence,arousal,p000,p001,...
//! s000001,3,0.5,-0.25,0.113,...
//! ```
//!
//! with empty valence/arousal fields allowed for classification-only sets.
//! A mirrored binary format (magic `FEIDS`, little-endian 64-bit floats)
//! carries the same content; the loader distinguishes the two by the magic
//! bytes. Train/val/test splits are separate caller-provided files - no
//! auto-splitting. Parameter vectors are treated as opaque: block order
//! inside the vector must simply be consistent between train and test
//! files.

mod predictions;
mod synth;

pub use predictions::{load_features, load_predictions, save_features, save_predictions_csv, FeatureSet, PredictionSet};
pub use synth::{split_per_class, synth_generate, SynthSpec, SynthVaSpec};

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Fixed label spaces of the two benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSpace {
    Raf7,
    Affect8,
}

impl LabelSpace {
    pub fn classes(&self) -> usize {
        match self {
            LabelSpace::Raf7 => 7,
            LabelSpace::Affect8 => 8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LabelSpace::Raf7 => "raf7",
            LabelSpace::Affect8 => "affect8",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raf7" => Ok(LabelSpace::Raf7),
            "affect8" => Ok(LabelSpace::Affect8),
            other => Err(Error::Config(format!(
                "unknown label space {other:?} (expected raf7 or affect8)"
            ))),
        }
    }

    fn code(&self) -> u8 {
        match self {
            LabelSpace::Raf7 => 0,
            LabelSpace::Affect8 => 1,
        }
    }

    fn from_code(c: u8, offset: u64) -> Result<Self> {
        match c {
            0 => Ok(LabelSpace::Raf7),
            1 => Ok(LabelSpace::Affect8),
            other => Err(Error::Format {
                offset,
                message: format!("unknown label-space code {other}"),
            }),
        }
    }
}

/// Parameter groupings of the two 3D regressors: short groups carry the
/// expression/pose/shape blocks, full groups all regressed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    EmocaShort,
    EmocaFull,
    SmirkShort,
    SmirkFull,
    Custom(usize),
}

impl ParamKind {
    pub fn dim(&self) -> usize {
        match self {
            ParamKind::EmocaShort => 156,
            ParamKind::EmocaFull => 334,
            ParamKind::SmirkShort => 353,
            ParamKind::SmirkFull => 358,
            ParamKind::Custom(d) => *d,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ParamKind::EmocaShort => "emoca_short".into(),
            ParamKind::EmocaFull => "emoca_full".into(),
            ParamKind::SmirkShort => "smirk_short".into(),
            ParamKind::SmirkFull => "smirk_full".into(),
            ParamKind::Custom(d) => format!("custom:{d}"),
        }
    }

    /// Parses `emoca_short`, `emoca_full`, `smirk_short`, `smirk_full`, or
    /// `custom:<dim>`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "emoca_short" => Ok(ParamKind::EmocaShort),
            "emoca_full" => Ok(ParamKind::EmocaFull),
            "smirk_short" => Ok(ParamKind::SmirkShort),
            "smirk_full" => Ok(ParamKind::SmirkFull),
            other => {
                if let Some(d) = other.strip_prefix("custom:") {
                    let dim: usize = d.parse().map_err(|_| {
                        Error::Config(format!("invalid custom dimension {d:?}"))
                    })?;
                    if dim == 0 {
                        return Err(Error::Config("custom dimension must be >= 1".into()));
                    }
                    Ok(ParamKind::Custom(dim))
                } else {
                    Err(Error::Config(format!(
                        "unknown parameter kind {other:?} (expected emoca_short, emoca_full, smirk_short, smirk_full, or custom:<dim>)"
                    )))
                }
            }
        }
    }
}

/// 3D-parameter vectors with class labels and optional valence/arousal
/// targets. Fully validated on construction: uniform dimension, unique
/// ids, labels inside the label space, VA inside [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDataset {
    pub kind: ParamKind,
    pub label_space: LabelSpace,
    pub ids: Vec<String>,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub va: Vec<Option<(f64, f64)>>,
}

impl ParamDataset {
    pub fn new(
        kind: ParamKind,
        label_space: LabelSpace,
        ids: Vec<String>,
        features: Matrix,
        labels: Vec<usize>,
        va: Vec<Option<(f64, f64)>>,
    ) -> Result<Self> {
        let n = ids.len();
        if features.rows() != n || labels.len() != n || va.len() != n {
            return Err(Error::Shape(format!(
                "dataset fields disagree: {n} ids, {} feature rows, {} labels, {} va entries",
                features.rows(),
                labels.len(),
                va.len()
            )));
        }
        if features.cols() != kind.dim() {
            return Err(Error::Data(format!(
                "dataset kind mismatch: expected {} ({} dims), found {} columns",
                kind.name(),
                kind.dim(),
                features.cols()
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
        for (i, &l) in labels.iter().enumerate() {
            if l >= label_space.classes() {
                return Err(Error::Data(format!(
                    "label {l} outside {} at sample {i}",
                    label_space.name()
                )));
            }
        }
        for (i, entry) in va.iter().enumerate() {
            if let Some((v, a)) = entry {
                for (name, x) in [("valence", v), ("arousal", a)] {
                    if !(-1.0..=1.0).contains(x) {
                        return Err(Error::Data(format!(
                            "{name} {x} outside [-1, 1] at sample {i}"
                        )));
                    }
                }
            }
        }
        Ok(ParamDataset {
            kind,
            label_space,
            ids,
            features,
            labels,
            va,
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

    /// True when every sample carries valence/arousal targets.
    pub fn has_full_va(&self) -> bool {
        !self.is_empty() && self.va.iter().all(|v| v.is_some())
    }

    /// `(N x 2)` valence/arousal target matrix; fails if any sample lacks
    /// the targets.
    pub fn va_matrix(&self) -> Result<Matrix> {
        let mut m = Matrix::zeros(self.len(), 2);
        for (i, entry) in self.va.iter().enumerate() {
            match entry {
                Some((v, a)) => {
                    m.set(i, 0, *v);
                    m.set(i, 1, *a);
                }
                None => {
                    return Err(Error::Data(format!(
                        "sample {} ({:?}) has no valence/arousal targets",
                        i, self.ids[i]
                    )))
                }
            }
        }
        Ok(m)
    }
}

/// Exact per-label counts in label-space order.
pub fn class_frequencies(ds: &ParamDataset) -> Result<Vec<usize>> {
    if ds.is_empty() {
        return Err(Error::Data("class frequencies of an empty dataset".into()));
    }
    let mut counts = vec![0usize; ds.label_space.classes()];
    for &l in &ds.labels {
        counts[l] += 1;
    }
    Ok(counts)
}

/// Result of an id inner join.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignResult {
    /// `(index in a, index in b)` pairs in `a` order.
    pub pairs: Vec<(usize, usize)>,
    pub dropped_a: usize,
    pub dropped_b: usize,
}

/// Inner join on ids; unmatched ids on either side are dropped and
/// counted. An empty intersection is an alignment error.
pub fn align(a: &[String], b: &[String]) -> Result<AlignResult> {
    let index_b: HashMap<&str, usize> = b.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut pairs = Vec::new();
    for (ia, id) in a.iter().enumerate() {
        if let Some(&ib) = index_b.get(id.as_str()) {
            pairs.push((ia, ib));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Alignment(format!(
            "no overlapping ids between the two sets ({} vs {} ids)",
            a.len(),
            b.len()
        )));
    }
    let dropped_a = a.len() - pairs.len();
    let dropped_b = b.len() - pairs.len();
    Ok(AlignResult {
        pairs,
        dropped_a,
        dropped_b,
    })
}

const DATASET_MAGIC: &[u8; 5] = b"FEIDS";
const DATASET_VERSION: u16 = 1;

/// Loads a dataset from either format (detected by the magic bytes) and
/// validates it against the expected parameter kind.
pub fn load_param_dataset(path: &Path, expected: ParamKind) -> Result<ParamDataset> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(DATASET_MAGIC) {
        parse_dataset_binary(&bytes, expected)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            line: 1,
            message: format!("dataset file is neither FEIDS binary nor UTF-8 text: {e}"),
        })?;
        parse_dataset_csv(&text, expected)
    }
}

fn parse_meta_line(line: &str) -> Result<LabelSpace> {
    let rest = line
        .strip_prefix("# fei3d-dataset v1")
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "expected meta line '# fei3d-dataset v1 label_space=<raf7|affect8>'".into(),
        })?;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("label_space=") {
            return LabelSpace::parse(v);
        }
    }
    Err(Error::Parse {
        line: 1,
        message: "meta line lacks label_space=".into(),
    })
}

fn parse_dataset_csv(text: &str, expected: ParamKind) -> Result<ParamDataset> {
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty dataset file".into(),
    })?;
    let label_space = parse_meta_line(meta)?;
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 2,
        message: "missing header line".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[0] != "id" || cols[1] != "label" || cols[2] != "valence" || cols[3] != "arousal" {
        return Err(Error::Parse {
            line: 2,
            message: "header must start with id,label,valence,arousal,p000,...".into(),
        });
    }
    let dim = cols.len() - 4;
    if dim != expected.dim() {
        return Err(Error::Data(format!(
            "dataset kind mismatch: expected {} ({} dims), found {} parameter columns",
            expected.name(),
            expected.dim(),
            dim
        )));
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut va = Vec::new();
    let mut feature_data: Vec<f64> = Vec::new();
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
        let label: usize = fields[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid label {:?}", fields[1]),
        })?;
        if label >= label_space.classes() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("label {label} outside {}", label_space.name()),
            });
        }
        labels.push(label);
        let entry = match (fields[2].is_empty(), fields[3].is_empty()) {
            (true, true) => None,
            (false, false) => {
                let v = parse_float(fields[2], line_no, "valence")?;
                let a = parse_float(fields[3], line_no, "arousal")?;
                for (name, x) in [("valence", v), ("arousal", a)] {
                    if !(-1.0..=1.0).contains(&x) {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("{name} {x} outside [-1, 1]"),
                        });
                    }
                }
                Some((v, a))
            }
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: "valence and arousal must both be present or both empty".into(),
                })
            }
        };
        va.push(entry);
        for (j, f) in fields[4..].iter().enumerate() {
            feature_data.push(parse_float(f, line_no, &format!("p{j:03}"))?);
        }
    }
    let n = ids.len();
    let features = Matrix::from_vec(n, dim, feature_data)?;
    ParamDataset::new(expected, label_space, ids, features, labels, va)
}

pub(crate) fn parse_float(s: &str, line: usize, field: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {field} value {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{field} value {s:?} is not finite"),
        });
    }
    Ok(v)
}

/// Writes the canonical CSV form. Floats are printed with the shortest
/// round-trip representation, so save/load is value-exact.
pub fn save_param_dataset_csv(ds: &ParamDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "# fei3d-dataset v1 label_space={}\n",
        ds.label_space.name()
    ));
    out.push_str("id,label,valence,arousal");
    for j in 0..ds.dim() {
        out.push_str(&format!(",p{j:03}"));
    }
    out.push('\n');
    for i in 0..ds.len() {
        if ds.ids[i].contains(',') {
            return Err(Error::Data(format!(
                "id {:?} contains a comma and cannot be written as CSV",
                ds.ids[i]
            )));
        }
        out.push_str(&ds.ids[i]);
        out.push(',');
        out.push_str(&ds.labels[i].to_string());
        match ds.va[i] {
            Some((v, a)) => out.push_str(&format!(",{v},{a}")),
            None => out.push_str(",,"),
        }
        for &x in ds.features.row(i) {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes the binary form (magic `FEIDS`, version, label space, dims,
/// then length-prefixed ids and little-endian f64 blocks).
pub fn save_param_dataset_binary(ds: &ParamDataset, path: &Path) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.push(ds.label_space.code());
    out.extend_from_slice(&(ds.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for i in 0..ds.len() {
        let id = ds.ids[i].as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(ds.labels[i] as u32).to_le_bytes());
        match ds.va[i] {
            Some((v, a)) => {
                out.push(1);
                out.extend_from_slice(&v.to_le_bytes());
                out.extend_from_slice(&a.to_le_bytes());
            }
            None => out.push(0),
        }
        for &x in ds.features.row(i) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_dataset_binary(bytes: &[u8], expected: ParamKind) -> Result<ParamDataset> {
    let mut r = crate::bytes::ByteReader::new(bytes);
    let magic = r.take(5, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic (expected FEIDS)".into(),
        });
    }
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Format {
            offset: 5,
            message: format!("unsupported version {version} (supported: {DATASET_VERSION})"),
        });
    }
    let ls_offset = r.pos();
    let label_space = LabelSpace::from_code(r.u8("label space")?, ls_offset)?;
    let dim = r.u32("dimension")? as usize;
    if dim != expected.dim() {
        return Err(Error::Data(format!(
            "dataset kind mismatch: expected {} ({} dims), found {dim}",
            expected.name(),
            expected.dim()
        )));
    }
    let n = r.u64("sample count")? as usize;
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut va = Vec::with_capacity(n);
    let mut feature_data = Vec::with_capacity(n * dim);
    for i in 0..n {
        let id_len = r.u32("id length")? as usize;
        let id_offset = r.pos();
        let id = String::from_utf8(r.take(id_len, "id")?.to_vec()).map_err(|_| Error::Format {
            offset: id_offset,
            message: format!("id of sample {i} is not UTF-8"),
        })?;
        ids.push(id);
        labels.push(r.u32("label")? as usize);
        let flag = r.u8("va flag")?;
        va.push(match flag {
            0 => None,
            1 => {
                let v = r.f64("valence")?;
                let a = r.f64("arousal")?;
                Some((v, a))
            }
            other => {
                return Err(Error::Format {
                    offset: r.pos() - 1,
                    message: format!("invalid va flag {other}"),
                })
            }
        });
        for _ in 0..dim {
            feature_data.push(r.f64("parameter")?);
        }
    }
    r.expect_end()?;
    let features = Matrix::from_vec(n, dim, feature_data)?;
    ParamDataset::new(expected, label_space, ids, features, labels, va)
}

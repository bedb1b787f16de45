//! Synthetic datasets for desk-scale validation: Gaussian class clusters
//! with a controllable margin, plus optional valence/arousal targets from
//! a declared linear map of the parameters.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

use super::{LabelSpace, ParamDataset, ParamKind};

/// Valence/arousal generation: targets are a linear map of the parameter
/// vector (rescaled to stay inside [-1, 1] at the 90% level) plus Gaussian
/// noise, clipped to the valid range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthVaSpec {
    pub noise_sigma: f64,
}

/// Cluster layout: class `k` sits at `(margin * sqrt(2)) * e_k`, placing
/// every pairwise decision boundary exactly `margin` away from both
/// centroids (centroid pairs are `2 * margin` apart). Samples add
/// isotropic Gaussian noise with `noise_sigma` per coordinate, so
/// `margin / noise_sigma` is the classification margin in noise units.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub margin: f64,
    pub noise_sigma: f64,
    pub label_space: LabelSpace,
    pub va: Option<SynthVaSpec>,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::Config("synth: classes must be >= 1".into()));
        }
        if self.classes > self.label_space.classes() {
            return Err(Error::Config(format!(
                "synth: {} classes exceed the {} label space",
                self.classes,
                self.label_space.name()
            )));
        }
        if self.dim < self.classes {
            return Err(Error::Config(format!(
                "synth: dim {} must be at least the class count {} for axis-aligned centroids",
                self.dim, self.classes
            )));
        }
        if self.per_class == 0 {
            return Err(Error::Config("synth: per_class must be >= 1".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Config(format!("synth: invalid margin {}", self.margin)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "synth: invalid noise sigma {}",
                self.noise_sigma
            )));
        }
        if let Some(va) = &self.va {
            if !(va.noise_sigma.is_finite() && va.noise_sigma >= 0.0) {
                return Err(Error::Config(format!(
                    "synth: invalid va noise sigma {}",
                    va.noise_sigma
                )));
            }
        }
        Ok(())
    }
}

/// Splits a class-contiguous dataset into train/val parts, taking the
/// last `val_per_class` samples of every class for validation. Both
/// halves share whatever target structure the generator drew (in
/// particular the valence/arousal linear map).
pub fn split_per_class(
    ds: &ParamDataset,
    val_per_class: usize,
) -> Result<(ParamDataset, ParamDataset)> {
    let classes = ds.label_space.classes();
    let mut per_class_rows: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        per_class_rows[l].push(i);
    }
    let mut train_rows = Vec::new();
    let mut val_rows = Vec::new();
    for rows in per_class_rows {
        if rows.is_empty() {
            continue;
        }
        if rows.len() <= val_per_class {
            return Err(Error::Config(format!(
                "class with {} samples cannot give up {val_per_class} validation samples",
                rows.len()
            )));
        }
        let cut = rows.len() - val_per_class;
        train_rows.extend_from_slice(&rows[..cut]);
        val_rows.extend_from_slice(&rows[cut..]);
    }
    let take = |rows: &[usize]| -> Result<ParamDataset> {
        ParamDataset::new(
            ds.kind,
            ds.label_space,
            rows.iter().map(|&i| ds.ids[i].clone()).collect(),
            ds.features.take_rows(rows),
            rows.iter().map(|&i| ds.labels[i]).collect(),
            rows.iter().map(|&i| ds.va[i]).collect(),
        )
    };
    Ok((take(&train_rows)?, take(&val_rows)?))
}

/// Generates the dataset deterministically from the RNG state.
pub fn synth_generate(spec: &SynthSpec, rng: &mut RngState) -> Result<ParamDataset> {
    spec.validate()?;
    let n = spec.classes * spec.per_class;
    let axis = spec.margin * 2.0_f64.sqrt();

    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut features = Matrix::zeros(n, spec.dim);
    let mut i = 0;
    for class in 0..spec.classes {
        for _ in 0..spec.per_class {
            ids.push(format!("s{i:06}"));
            labels.push(class);
            let row = features.row_mut(i);
            for (j, x) in row.iter_mut().enumerate() {
                let centroid = if j == class { axis } else { 0.0 };
                *x = centroid + spec.noise_sigma * rng.normal();
            }
            i += 1;
        }
    }

    let va = match &spec.va {
        None => vec![None; n],
        Some(va_spec) => {
            // Declared linear map: rows drawn once, then rescaled so the
            // noiseless targets stay inside [-1, 1] with headroom.
            let mut map = Matrix::zeros(2, spec.dim);
            let scale0 = 1.0 / (spec.dim as f64).sqrt();
            for v in map.data_mut() {
                *v = scale0 * rng.normal();
            }
            let mut raw = Matrix::zeros(n, 2);
            let mut max_abs: f64 = 0.0;
            for s in 0..n {
                for d in 0..2 {
                    let dot: f64 = features
                        .row(s)
                        .iter()
                        .zip(map.row(d))
                        .map(|(a, b)| a * b)
                        .sum();
                    raw.set(s, d, dot);
                    max_abs = max_abs.max(dot.abs());
                }
            }
            let rescale = if max_abs > 0.0 { 0.9 / max_abs } else { 1.0 };
            let mut out = Vec::with_capacity(n);
            for s in 0..n {
                let v = (raw.get(s, 0) * rescale + va_spec.noise_sigma * rng.normal())
                    .clamp(-1.0, 1.0);
                let a = (raw.get(s, 1) * rescale + va_spec.noise_sigma * rng.normal())
                    .clamp(-1.0, 1.0);
                out.push(Some((v, a)));
            }
            out
        }
    };

    ParamDataset::new(
        ParamKind::Custom(spec.dim),
        spec.label_space,
        ids,
        features,
        labels,
        va,
    )
}

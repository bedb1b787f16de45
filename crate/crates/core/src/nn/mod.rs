//! The parameter-vector classifier: four hidden blocks of
//! linear / batch-norm / leaky-ReLU (dropout after the first two) and a
//! task-specific linear head, with hand-written reverse-mode gradients.

mod gradcheck;
mod layers;

pub use gradcheck::grad_check;
pub use layers::{BatchNormLayer, DropoutLayer, Layer, LeakyReluLayer, LinearLayer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};

/// Output head of the classifier.
///
/// * `RafDb7` - 7 emotion classes.
/// * `Affectnet8Va` - 8 emotion classes plus valence and arousal (width 10).
/// * `VaOnly2` - valence and arousal only.
/// * `Custom(n)` - arbitrary width for tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    RafDb7,
    Affectnet8Va,
    VaOnly2,
    Custom(usize),
}

impl HeadKind {
    pub fn width(&self) -> usize {
        match self {
            HeadKind::RafDb7 => 7,
            HeadKind::Affectnet8Va => 10,
            HeadKind::VaOnly2 => 2,
            HeadKind::Custom(n) => *n,
        }
    }

    /// Number of leading classification columns (0 for a pure VA head).
    pub fn class_count(&self) -> usize {
        match self {
            HeadKind::RafDb7 => 7,
            HeadKind::Affectnet8Va => 8,
            HeadKind::VaOnly2 => 0,
            HeadKind::Custom(n) => *n,
        }
    }

    /// Whether the trailing two head columns are valence/arousal.
    pub fn has_va(&self) -> bool {
        matches!(self, HeadKind::Affectnet8Va | HeadKind::VaOnly2)
    }
}

/// Architecture knobs. The hidden width defaults to 2048; tests run tiny
/// instances by overriding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_width: usize,
    pub leaky_slope: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
    /// Dropout after the first and second hidden blocks.
    pub dropout: (f64, f64),
    /// Batch normalization toggle; production models keep it on.
    pub batch_norm: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_width: 2048,
            leaky_slope: 0.01,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
            dropout: (0.5, 0.4),
            batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// The layered classifier/regressor with parameter and gradient storage.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layers: Vec<Layer>,
    input_dim: usize,
    head: HeadKind,
    config: MlpConfig,
    rng: RngState,
    cache_ready: bool,
}

/// Builds the classifier with default architecture settings.
pub fn build_classifier(input_dim: usize, head: HeadKind, rng: RngState) -> Result<MlpModel> {
    build_classifier_with(input_dim, head, &MlpConfig::default(), rng)
}

/// Builds the classifier with explicit architecture settings.
pub fn build_classifier_with(
    input_dim: usize,
    head: HeadKind,
    config: &MlpConfig,
    mut rng: RngState,
) -> Result<MlpModel> {
    if input_dim == 0 {
        return Err(Error::Domain("input_dim must be at least 1".into()));
    }
    if head.width() == 0 {
        return Err(Error::Config("head width must be at least 1".into()));
    }
    if config.hidden_width == 0 {
        return Err(Error::Config("hidden width must be at least 1".into()));
    }
    let w = config.hidden_width;
    let mut layers = Vec::new();
    let mut fan_in = input_dim;
    for block in 0..4 {
        layers.push(Layer::Linear(LinearLayer::new(
            fan_in,
            w,
            config.leaky_slope,
            &mut rng,
        )?));
        if config.batch_norm {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(
                w,
                config.bn_epsilon,
                config.bn_momentum,
            )?));
        }
        layers.push(Layer::LeakyRelu(LeakyReluLayer::new(config.leaky_slope)));
        let rate = match block {
            0 => config.dropout.0,
            1 => config.dropout.1,
            _ => 0.0,
        };
        if rate > 0.0 {
            layers.push(Layer::Dropout(DropoutLayer::new(rate)?));
        }
        fan_in = w;
    }
    layers.push(Layer::Linear(LinearLayer::new(
        fan_in,
        head.width(),
        config.leaky_slope,
        &mut rng,
    )?));
    Ok(MlpModel {
        layers,
        input_dim,
        head,
        config: config.clone(),
        rng,
        cache_ready: false,
    })
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn head_width(&self) -> usize {
        self.head.width()
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.state_blocks().iter().map(|(_, m)| m.data().len()).sum::<usize>())
            .sum()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "batch {}x{} vs model input dimension {}",
                batch.rows(),
                batch.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Runs the network. Train mode caches intermediates for
    /// [`MlpModel::backprop`] and requires at least two rows for batch
    /// statistics; eval mode is deterministic and side-effect free.
    pub fn forward(&mut self, batch: &Matrix, mode: Mode) -> Result<Matrix> {
        match mode {
            Mode::Eval => self.forward_eval(batch),
            Mode::Train => {
                self.check_input(batch)?;
                let mut x = batch.clone();
                for layer in &mut self.layers {
                    x = layer.forward_train(&x, &mut self.rng)?;
                }
                x.check_finite("mlp forward")?;
                self.cache_ready = true;
                Ok(x)
            }
        }
    }

    /// Pure eval-mode forward; shareable across threads.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for layer in &self.layers {
            x = layer.forward_eval(&x)?;
        }
        x.check_finite("mlp forward")?;
        Ok(x)
    }

    /// Eval-mode forward with rows split across up to `threads` workers.
    /// Row results are independent of the chunking, so the output is
    /// identical to [`MlpModel::forward_eval`].
    pub fn forward_eval_chunked(&self, batch: &Matrix, threads: usize) -> Result<Matrix> {
        let threads = threads.max(1).min(batch.rows().max(1));
        if threads == 1 {
            return self.forward_eval(batch);
        }
        self.check_input(batch)?;
        let n = batch.rows();
        let chunk = n.div_ceil(threads);
        let mut pieces: Vec<Result<Matrix>> = Vec::new();
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..threads {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(n);
                if lo >= hi {
                    break;
                }
                let rows: Vec<usize> = (lo..hi).collect();
                let sub = batch.take_rows(&rows);
                handles.push(scope.spawn(move || self.forward_eval(&sub)));
            }
            for h in handles {
                pieces.push(h.join().expect("eval worker panicked"));
            }
        });
        let mut out = Matrix::zeros(n, self.head_width());
        let mut row = 0;
        for piece in pieces {
            let m = piece?;
            for i in 0..m.rows() {
                out.row_mut(row).copy_from_slice(m.row(i));
                row += 1;
            }
        }
        Ok(out)
    }

    /// Fills every layer's gradient fields (overwriting previous contents)
    /// and returns the gradient with respect to the input batch. Requires
    /// a prior train-mode forward pass.
    pub fn backprop(&mut self, grad_output: &Matrix) -> Result<Matrix> {
        if !self.cache_ready {
            return Err(Error::Protocol(
                "backprop requires a train-mode forward pass first".into(),
            ));
        }
        let mut g = grad_output.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }

    /// Flattened trainable `(parameter, gradient)` pairs in layer order.
    pub fn trainable_mut(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.trainable_mut())
            .collect()
    }

    /// Named persistent state blocks in checkpoint order.
    pub fn state_blocks(&self) -> Vec<(String, &Matrix)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.state_blocks()
                    .into_iter()
                    .map(move |(name, m)| (format!("layer{i}.{name}"), m))
            })
            .collect()
    }

    pub fn state_blocks_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.state_blocks_mut()
                    .into_iter()
                    .map(move |(name, m)| (format!("layer{i}.{name}"), m))
            })
            .collect()
    }

    /// Replaces the output head with a freshly initialized linear layer of
    /// the given kind, keeping the trunk. Used by the second stage of the
    /// valence-arousal protocol.
    pub fn replace_head(&mut self, head: HeadKind) -> Result<()> {
        if head.width() == 0 {
            return Err(Error::Config("head width must be at least 1".into()));
        }
        let fan_in = match self.layers.last() {
            Some(Layer::Linear(l)) => l.in_dim(),
            _ => return Err(Error::Protocol("model has no linear head to replace".into())),
        };
        let fresh = LinearLayer::new(fan_in, head.width(), self.config.leaky_slope, &mut self.rng)?;
        *self.layers.last_mut().expect("non-empty") = Layer::Linear(fresh);
        self.head = head;
        self.cache_ready = false;
        Ok(())
    }

    /// Eval-mode class probabilities (softmax over the class columns).
    /// For heads with trailing VA columns the probabilities cover only the
    /// class block; the VA columns are returned separately.
    pub fn predict(&self, batch: &Matrix, threads: usize) -> Result<Prediction> {
        let out = self.forward_eval_chunked(batch, threads)?;
        let classes = self.head.class_count();
        let (logits, va) = if self.head.has_va() && self.head != HeadKind::VaOnly2 {
            let (l, v) = out.split_cols(classes)?;
            (Some(l), Some(v))
        } else if self.head == HeadKind::VaOnly2 {
            (None, Some(out))
        } else {
            (Some(out), None)
        };
        Ok(Prediction {
            probabilities: logits.map(|l| crate::losses::softmax_rows(&l)),
            va: va.map(|v| clamp_va(&v)),
        })
    }

    /// Smallest leaky-ReLU pre-activation magnitude over a train-mode
    /// forward on a scratch copy; gradient checks use this to verify the
    /// batch sits away from the activation kinks.
    pub fn min_leaky_preactivation(&self, batch: &Matrix) -> Result<f64> {
        let mut scratch = self.clone();
        scratch.forward(batch, Mode::Train)?;
        let mut min = f64::INFINITY;
        for layer in scratch.layers() {
            if let Layer::LeakyRelu(l) = layer {
                if let Some(m) = l.min_abs_cached_input() {
                    min = min.min(m);
                }
            }
        }
        Ok(min)
    }
}

/// Output of [`MlpModel::predict`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probabilities: Option<Matrix>,
    pub va: Option<Matrix>,
}

/// Raw VA head outputs are unconstrained; predictions clamp them into the
/// valid [-1, 1] range.
fn clamp_va(v: &Matrix) -> Matrix {
    let mut out = v.clone();
    for x in out.data_mut() {
        *x = x.clamp(-1.0, 1.0);
    }
    out
}

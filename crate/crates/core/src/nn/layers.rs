//! The fixed layer vocabulary: linear, batch normalization, leaky ReLU,
//! and inverted dropout. Backprop is hand-written per layer.
//!
//! Train-mode forwards cache what the backward pass needs and take
//! `&mut self`; eval-mode forwards are pure `&self` so a model in eval
//! mode can be shared across threads.

use crate::error::{Error, Result};
use crate::numerics::{init_linear_params, Matrix, RngState};

/// Affine map `y = x W^T + b` with weights `(out x in)`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub weights: Matrix,
    pub bias: Matrix,
    pub grad_weights: Matrix,
    pub grad_bias: Matrix,
    cache_input: Option<Matrix>,
}

impl LinearLayer {
    pub fn new(fan_in: usize, fan_out: usize, leaky_slope: f64, rng: &mut RngState) -> Result<Self> {
        let (weights, bias) = init_linear_params(fan_in, fan_out, leaky_slope, rng)?;
        Ok(LinearLayer {
            grad_weights: Matrix::zeros(fan_out, fan_in),
            grad_bias: Matrix::zeros(fan_out, 1),
            weights,
            bias,
            cache_input: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "linear: input {}x{} vs weights {}x{}",
                x.rows(),
                x.cols(),
                self.out_dim(),
                self.in_dim()
            )));
        }
        let (n, out) = (x.rows(), self.out_dim());
        let mut y = Matrix::zeros(n, out);
        for i in 0..n {
            let xi = x.row(i);
            let yi = y.row_mut(i);
            for (o, yo) in yi.iter_mut().enumerate() {
                let wo = self.weights.row(o);
                let mut acc = self.bias.get(o, 0);
                for (a, b) in xi.iter().zip(wo) {
                    acc += a * b;
                }
                *yo = acc;
            }
        }
        Ok(y)
    }

    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        self.affine(x)
    }

    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        let y = self.affine(x)?;
        self.cache_input = Some(x.clone());
        Ok(y)
    }

    /// Fills `grad_weights`/`grad_bias` (overwrite semantics) and returns
    /// the gradient with respect to the input batch.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| Error::Protocol("linear backward without cached forward".into()))?;
        let (n, out) = (x.rows(), self.out_dim());
        if grad_out.shape() != (n, out) {
            return Err(Error::Shape(format!(
                "linear backward: grad {}x{} vs output {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                n,
                out
            )));
        }
        self.grad_weights = Matrix::zeros(out, self.in_dim());
        self.grad_bias = Matrix::zeros(out, 1);
        for i in 0..n {
            let gi = grad_out.row(i);
            let xi = x.row(i);
            for (o, &g) in gi.iter().enumerate() {
                self.grad_bias.data_mut()[o] += g;
                let wrow = self.grad_weights.row_mut(o);
                for (w, &xv) in wrow.iter_mut().zip(xi) {
                    *w += g * xv;
                }
            }
        }
        grad_out.matmul(&self.weights)
    }

    pub fn zero_grads(&mut self) {
        self.grad_weights.data_mut().fill(0.0);
        self.grad_bias.data_mut().fill(0.0);
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

/// Per-feature batch normalization with running statistics for eval mode.
/// Population (1/N) variance is used both for normalization and for the
/// running average.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub gamma: Matrix,
    pub beta: Matrix,
    pub grad_gamma: Matrix,
    pub grad_beta: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache>,
}

impl BatchNormLayer {
    pub fn new(features: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if features == 0 {
            return Err(Error::Domain("batch norm needs at least one feature".into()));
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::Domain(format!(
                "batch norm momentum must lie in (0, 1), got {momentum}"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Domain(format!(
                "batch norm epsilon must be positive, got {epsilon}"
            )));
        }
        let mut gamma = Matrix::zeros(1, features);
        gamma.data_mut().fill(1.0);
        let mut running_var = Matrix::zeros(1, features);
        running_var.data_mut().fill(1.0);
        Ok(BatchNormLayer {
            beta: Matrix::zeros(1, features),
            grad_gamma: Matrix::zeros(1, features),
            grad_beta: Matrix::zeros(1, features),
            running_mean: Matrix::zeros(1, features),
            gamma,
            running_var,
            momentum,
            epsilon,
            cache: None,
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.cols()
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.features() {
            return Err(Error::Shape(format!(
                "batch norm: input {}x{} vs {} features",
                x.rows(),
                x.cols(),
                self.features()
            )));
        }
        Ok(())
    }

    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let f = self.features();
        let mut y = Matrix::zeros(x.rows(), f);
        for i in 0..x.rows() {
            for j in 0..f {
                let inv = 1.0 / (self.running_var.get(0, j) + self.epsilon).sqrt();
                let xh = (x.get(i, j) - self.running_mean.get(0, j)) * inv;
                y.set(i, j, self.gamma.get(0, j) * xh + self.beta.get(0, j));
            }
        }
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::Domain(format!(
                "batch normalization needs at least 2 rows in train mode, got {n}"
            )));
        }
        let f = self.features();
        let nf = n as f64;
        let mut mean = vec![0.0; f];
        let mut var = vec![0.0; f];
        for i in 0..n {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += x.get(i, j);
            }
        }
        for m in mean.iter_mut() {
            *m /= nf;
        }
        for i in 0..n {
            for (j, v) in var.iter_mut().enumerate() {
                let d = x.get(i, j) - mean[j];
                *v += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= nf;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut x_hat = Matrix::zeros(n, f);
        let mut y = Matrix::zeros(n, f);
        for i in 0..n {
            for j in 0..f {
                let xh = (x.get(i, j) - mean[j]) * inv_std[j];
                x_hat.set(i, j, xh);
                y.set(i, j, self.gamma.get(0, j) * xh + self.beta.get(0, j));
            }
        }
        for j in 0..f {
            let rm = (1.0 - self.momentum) * self.running_mean.get(0, j) + self.momentum * mean[j];
            let rv = (1.0 - self.momentum) * self.running_var.get(0, j) + self.momentum * var[j];
            self.running_mean.set(0, j, rm);
            self.running_var.set(0, j, rv);
        }
        self.cache = Some(BnCache { x_hat, inv_std });
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Protocol("batch norm backward without cached forward".into()))?;
        let (n, f) = cache.x_hat.shape();
        if grad_out.shape() != (n, f) {
            return Err(Error::Shape(format!(
                "batch norm backward: grad {}x{} vs cached {n}x{f}",
                grad_out.rows(),
                grad_out.cols()
            )));
        }
        let nf = n as f64;
        let mut dgamma = vec![0.0; f];
        let mut dbeta = vec![0.0; f];
        let mut mean_dy = vec![0.0; f];
        let mut mean_dy_xhat = vec![0.0; f];
        for i in 0..n {
            for j in 0..f {
                let dy = grad_out.get(i, j);
                let xh = cache.x_hat.get(i, j);
                dgamma[j] += dy * xh;
                dbeta[j] += dy;
                mean_dy[j] += dy;
                mean_dy_xhat[j] += dy * xh;
            }
        }
        for j in 0..f {
            mean_dy[j] /= nf;
            mean_dy_xhat[j] /= nf;
            self.grad_gamma.set(0, j, dgamma[j]);
            self.grad_beta.set(0, j, dbeta[j]);
        }
        let mut dx = Matrix::zeros(n, f);
        for i in 0..n {
            for j in 0..f {
                let dy = grad_out.get(i, j);
                let xh = cache.x_hat.get(i, j);
                let v = self.gamma.get(0, j)
                    * cache.inv_std[j]
                    * (dy - mean_dy[j] - xh * mean_dy_xhat[j]);
                dx.set(i, j, v);
            }
        }
        Ok(dx)
    }

    pub fn zero_grads(&mut self) {
        self.grad_gamma.data_mut().fill(0.0);
        self.grad_beta.data_mut().fill(0.0);
    }
}

/// `f(x) = x` for `x >= 0`, `slope * x` otherwise.
#[derive(Debug, Clone)]
pub struct LeakyReluLayer {
    pub slope: f64,
    cache_input: Option<Matrix>,
}

impl LeakyReluLayer {
    pub fn new(slope: f64) -> Self {
        LeakyReluLayer {
            slope,
            cache_input: None,
        }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut y = x.clone();
        for v in y.data_mut() {
            if *v < 0.0 {
                *v *= self.slope;
            }
        }
        y
    }

    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.apply(x))
    }

    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        let y = self.apply(x);
        self.cache_input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .cache_input
            .as_ref()
            .ok_or_else(|| Error::Protocol("leaky relu backward without cached forward".into()))?;
        if grad_out.shape() != x.shape() {
            return Err(Error::Shape(format!(
                "leaky relu backward: grad {}x{} vs cached {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                x.rows(),
                x.cols()
            )));
        }
        let mut dx = grad_out.clone();
        for (d, &xv) in dx.data_mut().iter_mut().zip(x.data()) {
            if xv < 0.0 {
                *d *= self.slope;
            }
        }
        Ok(dx)
    }

    /// Smallest pre-activation magnitude of the cached train batch; used by
    /// gradient checks to keep finite differences away from the kink.
    pub fn min_abs_cached_input(&self) -> Option<f64> {
        self.cache_input
            .as_ref()
            .map(|x| x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }
}

#[derive(Debug, Clone)]
enum DropoutCache {
    Identity,
    Mask(Matrix),
}

/// Inverted dropout: surviving activations are scaled by `1/(1-rate)` so
/// the expected activation matches eval mode, where the layer is the
/// identity. A rate of zero consumes no randomness.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    pub rate: f64,
    cache: Option<DropoutCache>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(DropoutLayer { rate, cache: None })
    }

    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        Ok(x.clone())
    }

    pub fn forward_train(&mut self, x: &Matrix, rng: &mut RngState) -> Result<Matrix> {
        if self.rate == 0.0 {
            self.cache = Some(DropoutCache::Identity);
            return Ok(x.clone());
        }
        let scale = 1.0 / (1.0 - self.rate);
        let mut mask = Matrix::zeros(x.rows(), x.cols());
        let mut y = x.clone();
        for (m, v) in mask.data_mut().iter_mut().zip(y.data_mut()) {
            let u = rng.uniform(0.0, 1.0)?;
            if u >= self.rate {
                *m = scale;
                *v *= scale;
            } else {
                *m = 0.0;
                *v = 0.0;
            }
        }
        self.cache = Some(DropoutCache::Mask(mask));
        Ok(y)
    }

    pub fn backward(&self, grad_out: &Matrix) -> Result<Matrix> {
        match &self.cache {
            None => Err(Error::Protocol("dropout backward without cached forward".into())),
            Some(DropoutCache::Identity) => Ok(grad_out.clone()),
            Some(DropoutCache::Mask(mask)) => {
                if grad_out.shape() != mask.shape() {
                    return Err(Error::Shape(format!(
                        "dropout backward: grad {}x{} vs mask {}x{}",
                        grad_out.rows(),
                        grad_out.cols(),
                        mask.rows(),
                        mask.cols()
                    )));
                }
                let mut dx = grad_out.clone();
                for (d, &m) in dx.data_mut().iter_mut().zip(mask.data()) {
                    *d *= m;
                }
                Ok(dx)
            }
        }
    }
}

/// One element of the model's layer list.
#[derive(Debug, Clone)]
pub enum Layer {
    Linear(LinearLayer),
    BatchNorm(BatchNormLayer),
    LeakyRelu(LeakyReluLayer),
    Dropout(DropoutLayer),
}

impl Layer {
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.forward_eval(x),
            Layer::BatchNorm(l) => l.forward_eval(x),
            Layer::LeakyRelu(l) => l.forward_eval(x),
            Layer::Dropout(l) => l.forward_eval(x),
        }
    }

    pub fn forward_train(&mut self, x: &Matrix, rng: &mut RngState) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.forward_train(x),
            Layer::BatchNorm(l) => l.forward_train(x),
            Layer::LeakyRelu(l) => l.forward_train(x),
            Layer::Dropout(l) => l.forward_train(x, rng),
        }
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Linear(l) => l.backward(grad_out),
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::LeakyRelu(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
        }
    }

    pub fn zero_grads(&mut self) {
        match self {
            Layer::Linear(l) => l.zero_grads(),
            Layer::BatchNorm(l) => l.zero_grads(),
            Layer::LeakyRelu(_) | Layer::Dropout(_) => {}
        }
    }

    /// Trainable `(parameter, gradient)` slice pairs in declared order.
    pub fn trainable_mut(&mut self) -> Vec<(&mut [f64], &[f64])> {
        match self {
            Layer::Linear(l) => vec![
                (l.weights.data_mut(), l.grad_weights.data()),
                (l.bias.data_mut(), l.grad_bias.data()),
            ],
            Layer::BatchNorm(l) => vec![
                (l.gamma.data_mut(), l.grad_gamma.data()),
                (l.beta.data_mut(), l.grad_beta.data()),
            ],
            Layer::LeakyRelu(_) | Layer::Dropout(_) => vec![],
        }
    }

    /// Persistent state blocks (parameters plus running statistics) in the
    /// order the checkpoint format declares.
    pub fn state_blocks(&self) -> Vec<(&'static str, &Matrix)> {
        match self {
            Layer::Linear(l) => vec![("weights", &l.weights), ("bias", &l.bias)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &l.gamma),
                ("beta", &l.beta),
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            Layer::LeakyRelu(_) | Layer::Dropout(_) => vec![],
        }
    }

    pub fn state_blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        match self {
            Layer::Linear(l) => vec![("weights", &mut l.weights), ("bias", &mut l.bias)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &mut l.gamma),
                ("beta", &mut l.beta),
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            Layer::LeakyRelu(_) | Layer::Dropout(_) => vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bn_train_output_has_target_moments() {
        let mut bn = BatchNormLayer::new(3, 1e-5, 0.1).unwrap();
        bn.gamma.data_mut().copy_from_slice(&[2.0, 0.5, 1.0]);
        bn.beta.data_mut().copy_from_slice(&[0.1, -0.3, 0.0]);
        let mut rng = RngState::seed(4);
        let mut x = Matrix::zeros(64, 3);
        for v in x.data_mut() {
            *v = rng.uniform(-2.0, 5.0).unwrap();
        }
        let y = bn.forward_train(&x).unwrap();
        for j in 0..3 {
            let col = y.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert!((mean - bn.beta.get(0, j)).abs() < 1e-6, "mean {mean}");
            let g = bn.gamma.get(0, j);
            assert!((var - g * g).abs() < 1e-4, "var {var} vs {}", g * g);
        }
    }

    #[test]
    fn bn_rejects_single_row_in_train_mode() {
        let mut bn = BatchNormLayer::new(2, 1e-5, 0.1).unwrap();
        let x = Matrix::zeros(1, 2);
        assert!(bn.forward_train(&x).is_err());
        assert!(bn.forward_eval(&x).is_ok());
    }

    #[test]
    fn bn_running_var_stays_positive() {
        let mut bn = BatchNormLayer::new(2, 1e-5, 0.1).unwrap();
        let x = Matrix::zeros(4, 2); // zero-variance batch
        for _ in 0..50 {
            bn.forward_train(&x).unwrap();
        }
        assert!(bn.running_var.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn leaky_relu_is_monotone_and_piecewise() {
        let l = LeakyReluLayer::new(0.01);
        let x = Matrix::from_vec(1, 4, vec![-2.0, -0.5, 0.0, 3.0]).unwrap();
        let y = l.forward_eval(&x).unwrap();
        assert_eq!(y.data(), &[-0.02, -0.005, 0.0, 3.0]);
        let mut prev = f64::NEG_INFINITY;
        for &v in y.data() {
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_train_preserves_mean() {
        let mut d = DropoutLayer::new(0.5).unwrap();
        let mut rng = RngState::seed(21);
        let x = Matrix::from_vec(1, 8, vec![1.0, -2.0, 0.5, 3.0, -1.0, 0.25, 4.0, -0.75]).unwrap();
        assert_eq!(d.forward_eval(&x).unwrap(), x);
        let trials = 10_000;
        let mut acc = [0.0; 8];
        for _ in 0..trials {
            let y = d.forward_train(&x, &mut rng).unwrap();
            for (a, &v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        for (a, &xi) in acc.iter().zip(x.data()) {
            let mean = a / trials as f64;
            assert!(
                (mean - xi).abs() <= 0.02 * xi.abs().max(1.0),
                "mean {mean} vs activation {xi}"
            );
        }
    }

    #[test]
    fn dropout_rate_zero_consumes_no_randomness() {
        let mut d = DropoutLayer::new(0.0).unwrap();
        let mut rng = RngState::seed(5);
        let before = rng.clone();
        let x = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = d.forward_train(&x, &mut rng).unwrap();
        assert_eq!(y, x);
        assert_eq!(rng, before);
    }

    #[test]
    fn dropout_rejects_rate_one() {
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(-0.1).is_err());
    }

    #[test]
    fn linear_backward_requires_cache() {
        let mut rng = RngState::seed(1);
        let mut l = LinearLayer::new(3, 2, 0.01, &mut rng).unwrap();
        let g = Matrix::zeros(1, 2);
        assert!(matches!(l.backward(&g), Err(Error::Protocol(_))));
    }
}

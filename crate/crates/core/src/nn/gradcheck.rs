//! Central finite-difference verification of the hand-written gradients.

use crate::error::{Error, Result};
use crate::losses::{BatchTargets, LossKind};
use crate::numerics::Matrix;

use super::{MlpModel, Mode};

/// Compares every trainable parameter's analytic gradient against the
/// central finite difference `(L(p+h) - L(p-h)) / 2h` and returns the
/// maximum relative error. Where both gradients are near zero
/// (magnitude below 1e-8) the absolute difference is reported instead.
///
/// The model is restored to its initial state afterwards. Dropout must be
/// disabled and the batch should keep pre-activations away from the leaky
/// ReLU kinks (see [`MlpModel::min_leaky_preactivation`]); `h` must lie in
/// `[1e-7, 1e-3]`.
pub fn grad_check(
    model: &mut MlpModel,
    loss: &LossKind,
    batch: &Matrix,
    targets: &BatchTargets,
    h: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Domain(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {h}"
        )));
    }
    let snapshot = model.clone();

    model.zero_grads();
    let out = model.forward(batch, Mode::Train)?;
    let (_, grad_out) = loss.eval(&out, targets)?;
    model.backprop(&grad_out)?;
    let analytic: Vec<Vec<f64>> = model
        .trainable_mut()
        .into_iter()
        .map(|(_, g)| g.to_vec())
        .collect();

    let mut max_err: f64 = 0.0;
    for (p, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let orig = {
                let pairs = model.trainable_mut();
                pairs[p].0[e]
            };
            set_param(model, p, e, orig + h);
            let loss_plus = loss_value(model, loss, batch, targets)?;
            set_param(model, p, e, orig - h);
            let loss_minus = loss_value(model, loss, batch, targets)?;
            set_param(model, p, e, orig);

            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-8 {
                (a - numeric).abs()
            } else {
                (a - numeric).abs() / scale
            };
            max_err = max_err.max(err);
        }
    }

    *model = snapshot;
    Ok(max_err)
}

fn set_param(model: &mut MlpModel, p: usize, e: usize, value: f64) {
    let mut pairs = model.trainable_mut();
    pairs[p].0[e] = value;
}

fn loss_value(
    model: &mut MlpModel,
    loss: &LossKind,
    batch: &Matrix,
    targets: &BatchTargets,
) -> Result<f64> {
    let out = model.forward(batch, Mode::Train)?;
    Ok(loss.eval(&out, targets)?.0)
}

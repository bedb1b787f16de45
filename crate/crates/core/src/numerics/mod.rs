//! Dense matrix storage, the deterministic PRNG, and parameter
//! initialization used by every other module.
//!
//! All computation is 64-bit. Parameter counts stay small enough (a few
//! million) that f64 keeps finite-difference gradient checks meaningful,
//! and checkpoints store f64 verbatim.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::RngState;

use crate::error::{Error, Result};

/// Kaiming-style uniform initialization scaled for a leaky-ReLU negative
/// slope `a`: weights are drawn from `U(-b, b)` with
/// `b = sqrt(2 / (1 + a^2)) * sqrt(3 / fan_in)`, bias is zero.
///
/// Weights come back as `(fan_out x fan_in)`, bias as `(fan_out x 1)`.
/// The draw order is row-major, so a fixed seed reproduces the matrices
/// bit-for-bit on any platform.
pub fn init_linear_params(
    fan_in: usize,
    fan_out: usize,
    leaky_slope: f64,
    rng: &mut RngState,
) -> Result<(Matrix, Matrix)> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Domain(format!(
            "init_linear_params requires fan_in >= 1 and fan_out >= 1, got {fan_in}x{fan_out}"
        )));
    }
    let bound = init_bound(fan_in, leaky_slope);
    let mut weights = Matrix::zeros(fan_out, fan_in);
    for w in weights.data_mut() {
        *w = rng.uniform(-bound, bound)?;
    }
    let bias = Matrix::zeros(fan_out, 1);
    Ok((weights, bias))
}

/// Uniform bound of the initialization scheme above.
pub fn init_bound(fan_in: usize, leaky_slope: f64) -> f64 {
    let gain = (2.0 / (1.0 + leaky_slope * leaky_slope)).sqrt();
    gain * (3.0 / fan_in as f64).sqrt()
}

/// Theoretical standard deviation of the drawn weights (`bound / sqrt(3)`).
pub fn init_theoretical_std(fan_in: usize, leaky_slope: f64) -> f64 {
    init_bound(fan_in, leaky_slope) / 3.0_f64.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seed_deterministic() {
        let mut a = RngState::seed(42);
        let mut b = RngState::seed(42);
        let (wa, ba) = init_linear_params(156, 64, 0.01, &mut a).unwrap();
        let (wb, bb) = init_linear_params(156, 64, 0.01, &mut b).unwrap();
        assert_eq!(wa.data(), wb.data());
        assert_eq!(ba.data(), bb.data());
    }

    #[test]
    fn init_bias_is_zero() {
        let mut rng = RngState::seed(1);
        let (_, bias) = init_linear_params(8, 5, 0.01, &mut rng).unwrap();
        assert!(bias.data().iter().all(|&v| v == 0.0));
        assert_eq!((bias.rows(), bias.cols()), (5, 1));
    }

    #[test]
    fn init_rejects_zero_dims() {
        let mut rng = RngState::seed(1);
        assert!(init_linear_params(0, 5, 0.01, &mut rng).is_err());
        assert!(init_linear_params(5, 0, 0.01, &mut rng).is_err());
    }

    #[test]
    fn init_sample_std_matches_theory() {
        let mut rng = RngState::seed(7);
        let (w, _) = init_linear_params(100, 100, 0.01, &mut rng).unwrap();
        let n = w.data().len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let var = w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let theory = init_theoretical_std(100, 0.01);
        assert!(
            (std - theory).abs() / theory < 0.15,
            "sample std {std} vs theoretical {theory}"
        );
    }
}

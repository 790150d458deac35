//! Augmented Dickey–Fuller unit-root test with a constant term.
//!
//! Critical values come from MacKinnon's (2010) response surfaces for the
//! constant-only case; p-values from MacKinnon's (1994) normal-CDF
//! approximation. Both match the tables used by statsmodels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Response-surface coefficients `β∞, β1, β2, β3` for the 1%, 5% and 10%
/// levels, constant only, one series.
const CRIT_CONST: [(f64, [f64; 4]); 3] = [
    (0.01, [-3.43035, -6.5393, -16.786, -79.433]),
    (0.05, [-2.86154, -2.8903, -4.234, -40.040]),
    (0.10, [-2.56677, -1.5384, -2.809, 0.0]),
];

const TAU_MAX_C: f64 = 2.74;
const TAU_MIN_C: f64 = -18.83;
const TAU_STAR_C: f64 = -1.61;
const TAU_C_SMALLP: [f64; 3] = [2.1659, 1.4412, 3.8269e-2];
const TAU_C_LARGEP: [f64; 4] = [1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2];

/// Result of one test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    /// t-ratio of the lagged level coefficient.
    pub statistic: f64,
    /// Approximate asymptotic p-value.
    pub p_value: f64,
    /// Critical value the statistic was compared with.
    pub critical_value: f64,
    pub lags: usize,
    pub n_obs: usize,
    pub alpha: f64,
    /// Unit-root null rejected, i.e. the series looks stationary.
    pub stationary: bool,
}

/// Lag order `⌈12·(L/100)^¼⌉`, capped so the regression keeps residual
/// degrees of freedom.
pub fn schwert_lags(len: usize) -> usize {
    let schwert = (12.0 * (len as f64 / 100.0).powf(0.25)).ceil() as usize;
    schwert.min((len / 2).saturating_sub(2))
}

/// MacKinnon (2010) finite-sample critical value, if `alpha` is tabulated.
pub fn critical_value(alpha: f64, n_obs: usize) -> Option<f64> {
    let t = n_obs as f64;
    CRIT_CONST
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|(_, b)| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t))
}

/// MacKinnon (1994) asymptotic p-value of a constant-only ADF statistic.
pub fn mackinnon_p_value(statistic: f64) -> f64 {
    if statistic > TAU_MAX_C {
        return 1.0;
    }
    if statistic < TAU_MIN_C {
        return 0.0;
    }
    let z = if statistic <= TAU_STAR_C {
        TAU_C_SMALLP.iter().rev().fold(0.0, |acc, c| acc * statistic + c)
    } else {
        TAU_C_LARGEP.iter().rev().fold(0.0, |acc, c| acc * statistic + c)
    };
    Normal::standard().cdf(z)
}

/// Runs the test at significance `alpha`.
///
/// Tabulated levels (1%, 5%, 10%) use the finite-sample critical values;
/// any other level compares the approximate p-value with `alpha`.
pub fn adf_test(series: &[f64], alpha: f64) -> Result<AdfResult> {
    let len = series.len();
    if len < 20 {
        return Err(Error::Degenerate(format!("ADF needs at least 20 samples, got {len}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("significance {alpha} outside (0, 1)")));
    }
    let first = series[0];
    if series.iter().all(|&x| x == first) {
        return Err(Error::Degenerate("ADF on a constant series".into()));
    }
    let lags = schwert_lags(len);
    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let n_obs = diff.len() - lags;
    let k = 2 + lags;
    // Δy_t = γ·y_{t−1} + c + Σ δ_j Δy_{t−j}
    let x = DMatrix::from_fn(n_obs, k, |row, col| {
        let t = row + lags;
        match col {
            0 => series[t],
            1 => 1.0,
            j => diff[t - (j - 1)],
        }
    });
    let y = DVector::from_fn(n_obs, |row, _| diff[row + lags]);
    let xtx = x.transpose() * &x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ADF regression is rank deficient".into()))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &beta;
    let sigma2 = resid.norm_squared() / (n_obs - k) as f64;
    let var_gamma = sigma2 * chol.inverse()[(0, 0)];
    if !(var_gamma > 0.0 && var_gamma.is_finite()) {
        return Err(Error::Degenerate("ADF regression has no residual variance".into()));
    }
    let statistic = beta[0] / var_gamma.sqrt();
    let p_value = mackinnon_p_value(statistic);
    let (critical_value, stationary) = match critical_value(alpha, n_obs) {
        Some(cv) => (cv, statistic < cv),
        None => (f64::NAN, p_value < alpha),
    };
    Ok(AdfResult { statistic, p_value, critical_value, lags, n_obs, alpha, stationary })
}

/// Whether the unit-root null is rejected at `alpha`, with the statistic.
pub fn adf_is_stationary(series: &[f64], alpha: f64) -> Result<(bool, f64)> {
    adf_test(series, alpha).map(|r| (r.stationary, r.statistic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn lag_rule() {
        assert_eq!(schwert_lags(500), 18);
        assert_eq!(schwert_lags(100), 12);
        assert_eq!(schwert_lags(20), 8);
    }

    #[test]
    fn critical_values_approach_asymptotic() {
        assert!((critical_value(0.05, 1_000_000).unwrap() + 2.86154).abs() < 1e-5);
        assert!(critical_value(0.05, 100).unwrap() < -2.86154);
        assert!(critical_value(0.07, 100).is_none());
    }

    #[test]
    fn p_value_is_consistent_with_critical_values() {
        // asymptotic 5% critical value maps to p ≈ 0.05
        assert!((mackinnon_p_value(-2.86154) - 0.05).abs() < 0.005);
        assert!((mackinnon_p_value(-3.43035) - 0.01).abs() < 0.002);
        assert_eq!(mackinnon_p_value(5.0), 1.0);
        assert_eq!(mackinnon_p_value(-30.0), 0.0);
    }

    #[test]
    fn white_noise_is_stationary_and_random_walk_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        assert!(adf_is_stationary(&noise, 0.05).unwrap().0);
        let walk: Vec<f64> = noise.iter().scan(0.0, |s, x| {
            *s += x;
            Some(*s)
        }).collect();
        let r = adf_test(&walk, 0.05).unwrap();
        assert!(!r.stationary, "{r:?}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(adf_test(&[1.0; 50], 0.05), Err(Error::Degenerate(_))));
        assert!(matches!(adf_test(&[1.0, 2.0, 3.0], 0.05), Err(Error::Degenerate(_))));
    }

    #[test]
    fn untabulated_alpha_uses_p_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let r = adf_test(&noise, 0.07).unwrap();
        assert!(r.critical_value.is_nan());
        assert_eq!(r.stationary, r.p_value < 0.07);
    }
}

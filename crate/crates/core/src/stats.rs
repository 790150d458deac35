//! Distribution quantiles used for control limits.

use statrs::function::beta::{checked_beta_reg, inv_beta_reg as approx_inv_beta_reg, ln_beta};

use crate::error::{Error, Result};

/// Inverse of the regularized incomplete beta function `I_x(a, b) = p`.
///
/// Safeguarded Newton iteration on a shrinking bracket, refined until the
/// step falls below 1e-15 relative; the residual in `p` is below 1e-12
/// for well-conditioned arguments.
pub fn inv_beta_reg(a: f64, b: f64, p: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("beta shape parameters must be positive, got a={a}, b={b}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let ln_norm = ln_beta(a, b);
    let cdf = |x: f64| checked_beta_reg(a, b, x).map_err(|e| Error::Domain(e.to_string()));
    let density = |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_norm).exp();

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = approx_inv_beta_reg(a, b, p);
    if !(x > 0.0 && x < 1.0) {
        x = 0.5;
    }
    for _ in 0..300 {
        let residual = cdf(x)? - p;
        if residual == 0.0 {
            return Ok(x);
        }
        if residual > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let slope = density(x);
        let mut next = if slope.is_finite() && slope > 0.0 { x - residual / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Quantile of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("F quantile needs p in (0, 1), got {p}")));
    }
    let x = inv_beta_reg(d1 / 2.0, d2 / 2.0, p)?;
    Ok(d2 * x / (d1 * (1.0 - x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

    #[test]
    fn inverse_round_trips_through_cdf() {
        for &(a, b) in &[(0.5, 0.5), (1.0, 3.0), (2.5, 40.0), (0.5, 50_000.0), (7.0, 2.0)] {
            for &p in &[1e-6, 0.01, 0.05, 0.5, 0.95, 0.99] {
                let x = inv_beta_reg(a, b, p).unwrap();
                let back = checked_beta_reg(a, b, x).unwrap();
                assert!((back - p).abs() < 1e-10 * p.max(1e-3), "a={a} b={b} p={p} back={back}");
            }
        }
    }

    #[test]
    fn f_quantile_matches_independent_cdf() {
        for &(d1, d2) in &[(1.0, 10.0), (3.0, 30.0), (5.0, 2000.0)] {
            let q = f_quantile(0.95, d1, d2).unwrap();
            let f = FisherSnedecor::new(d1, d2).unwrap();
            assert!((f.cdf(q) - 0.95).abs() < 1e-10);
        }
    }

    #[test]
    fn f_quantile_tends_to_scaled_chi_square() {
        // d1·F(d1, d2) → χ²(d1) as d2 → ∞
        let chi = ChiSquared::new(2.0).unwrap().inverse_cdf(0.95);
        let q = f_quantile(0.95, 2.0, 1e7).unwrap() * 2.0;
        assert!((q - chi).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(inv_beta_reg(-1.0, 1.0, 0.5).is_err());
        assert!(inv_beta_reg(1.0, 1.0, 1.5).is_err());
        assert!(f_quantile(1.0, 1.0, 1.0).is_err());
        assert_eq!(inv_beta_reg(2.0, 3.0, 0.0).unwrap(), 0.0);
    }
}

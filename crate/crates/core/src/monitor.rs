//! PCA + Hotelling-T² model of normal invariant variation.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_serde, vector_serde};
use crate::ssa::InvariantSeries;
use crate::stats::f_quantile;

/// Normal-region model fitted on training invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringModel {
    /// `R × d`, orthonormal rows.
    #[serde(with = "matrix_serde")]
    pub loadings: DMatrix<f64>,
    /// `Ξ_s`, covariance of the retained training scores.
    #[serde(with = "matrix_serde")]
    pub score_cov: DMatrix<f64>,
    pub t2_limit: f64,
    pub retained: usize,
    pub alpha: f64,
    pub n_train: usize,
    #[serde(with = "vector_serde")]
    pub center: DVector<f64>,
    pub variance_target: f64,
    /// PCA eigenvalues of the training invariants, descending.
    pub eigenvalues: Vec<f64>,
}

/// Per-sample statistics of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleScore {
    pub cycle_index: usize,
    pub t2: Vec<f64>,
    /// Fraction of samples with `t² > limit`.
    pub abnormality_rate: f64,
}

/// Control limit `R(N−1)(N+1)/(N(N−R)) · F_{R, N−R}(1−α)` for a new
/// observation given `N` training samples and `R` retained components.
pub fn hotelling_limit(retained: usize, n_train: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("significance {alpha} outside (0, 1)")));
    }
    if retained == 0 || n_train <= retained {
        return Err(Error::Usage(format!(
            "T² limit needs 0 < R < N, got R={retained}, N={n_train}"
        )));
    }
    let (r, n) = (retained as f64, n_train as f64);
    let scale = r * (n - 1.0) * (n + 1.0) / (n * (n - r));
    Ok(scale * f_quantile(1.0 - alpha, r, n - r)?)
}

/// Fits PCA on the centered training invariants, keeps the fewest
/// components reaching `variance_target` and derives the T² limit.
pub fn fit_monitor(training: &DMatrix<f64>, variance_target: f64, alpha: f64) -> Result<MonitoringModel> {
    let (n, d) = training.shape();
    if d == 0 {
        return Err(Error::Usage("no invariant columns to monitor".into()));
    }
    if n < d + 2 {
        return Err(Error::Usage(format!("monitor needs at least {} training rows, got {n}", d + 2)));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Usage(format!("variance target {variance_target} outside (0, 1]")));
    }
    let center = linalg::column_means(training);
    let cov = linalg::covariance_about(training, &center);
    let (values, vectors) = linalg::sorted_eigen(&cov);
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Singular("training invariants have no variance".into()));
    }
    let mut cumulative = 0.0;
    let mut retained = d;
    for (i, v) in values.iter().enumerate() {
        cumulative += v.max(0.0);
        if cumulative / total >= variance_target - 1e-12 {
            retained = i + 1;
            break;
        }
    }
    let loadings = vectors.columns(0, retained).transpose();
    let scores = linalg::center_rows(training, &center) * loadings.transpose();
    let score_cov = linalg::covariance_about(&scores, &DVector::zeros(retained));
    if score_cov.clone().cholesky().is_none() {
        return Err(Error::Singular("retained score covariance is not positive definite".into()));
    }
    let t2_limit = hotelling_limit(retained, n, alpha)?;
    Ok(MonitoringModel {
        loadings,
        score_cov,
        t2_limit,
        retained,
        alpha,
        n_train: n,
        center,
        variance_target,
        eigenvalues: values.iter().copied().collect(),
    })
}

/// Fits the monitor on row-concatenated invariant series.
pub fn fit_monitor_series(training: &[InvariantSeries], variance_target: f64, alpha: f64) -> Result<MonitoringModel> {
    let blocks: Vec<_> = training.iter().map(|t| t.scores.clone()).collect();
    fit_monitor(&linalg::vstack(&blocks)?, variance_target, alpha)
}

impl MonitoringModel {
    /// Invariant width `d`.
    pub fn width(&self) -> usize {
        self.center.len()
    }

    fn cov_factor(&self) -> Result<Cholesky<f64, Dyn>> {
        self.score_cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("score covariance is not positive definite".into()))
    }

    /// `t²` of every row of an invariant matrix.
    pub fn t2_rows(&self, invariants: &DMatrix<f64>) -> Result<Vec<f64>> {
        if invariants.ncols() != self.width() {
            return Err(Error::Dimension(format!(
                "monitor expects {} invariant columns, got {}",
                self.width(),
                invariants.ncols()
            )));
        }
        let chol = self.cov_factor()?;
        let scores = linalg::center_rows(invariants, &self.center) * self.loadings.transpose();
        // t² = ‖L⁻¹ z‖² with Ξ = L Lᵀ
        let whitened = chol.l().solve_lower_triangular(&scores.transpose()).ok_or_else(|| {
            Error::Singular("score covariance factor is singular".into())
        })?;
        Ok(whitened.column_iter().map(|c| c.norm_squared()).collect())
    }
}

/// Scores one cycle against the model.
pub fn score_cycle(model: &MonitoringModel, invariants: &InvariantSeries) -> Result<CycleScore> {
    let t2 = model.t2_rows(&invariants.scores)?;
    let abnormal = t2.iter().filter(|&&v| v > model.t2_limit).count();
    let abnormality_rate = if t2.is_empty() { 0.0 } else { abnormal as f64 / t2.len() as f64 };
    Ok(CycleScore { cycle_index: invariants.cycle_index, t2, abnormality_rate })
}

/// Writes per-sample statistics as `cycle,k,t2,limit` with 1-based `k`.
pub fn write_t2_trace<W: Write>(writer: W, scores: &[CycleScore], limit: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cycle", "k", "t2", "limit"])?;
    for s in scores {
        for (k, v) in s.t2.iter().enumerate() {
            w.write_record([s.cycle_index.to_string(), (k + 1).to_string(), v.to_string(), limit.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, j| rng.sample::<f64, _>(StandardNormal) * (3.0 - j as f64))
    }

    fn series(scores: DMatrix<f64>) -> InvariantSeries {
        InvariantSeries { cycle_index: 1, scores }
    }

    #[test]
    fn points_on_a_line_keep_one_component() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 - 7.0).collect();
        let x = DMatrix::from_fn(20, 3, |i, j| t[i] * [1.0, -2.0, 0.5][j]);
        let m = fit_monitor(&x, 0.85, 0.05).unwrap();
        assert_eq!(m.retained, 1);
        assert!(m.t2_limit > 0.0);
    }

    #[test]
    fn retained_count_meets_variance_target() {
        let x = gaussian(500, 3, 1);
        let m = fit_monitor(&x, 0.85, 0.05).unwrap();
        let total: f64 = m.eigenvalues.iter().sum();
        let kept: f64 = m.eigenvalues[..m.retained].iter().sum();
        assert!(kept / total >= 0.85);
        if m.retained > 1 {
            let fewer: f64 = m.eigenvalues[..m.retained - 1].iter().sum();
            assert!(fewer / total < 0.85);
        }
        let gram = &m.loadings * m.loadings.transpose();
        assert!((gram - DMatrix::identity(m.retained, m.retained)).norm() < 1e-8);
    }

    #[test]
    fn large_sample_limit_tends_to_chi_square() {
        // χ²₁(0.95) = 3.841458820694124
        let lim = hotelling_limit(1, 10_000, 0.05).unwrap();
        assert!((lim - 3.8415).abs() < 0.01, "{lim}");
    }

    #[test]
    fn limit_decreases_with_alpha() {
        let mut prev = f64::INFINITY;
        for a in [0.001, 0.01, 0.05, 0.1, 0.3] {
            let l = hotelling_limit(3, 200, a).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn center_scores_zero() {
        let x = gaussian(100, 2, 3);
        let m = fit_monitor(&x, 0.85, 0.05).unwrap();
        let at_center = DMatrix::from_fn(10, 2, |_, j| m.center[j]);
        let s = score_cycle(&m, &series(at_center)).unwrap();
        assert!(s.t2.iter().all(|&v| v.abs() < 1e-20));
        assert_eq!(s.abnormality_rate, 0.0);
    }

    #[test]
    fn errors() {
        let x = gaussian(100, 2, 4);
        let m = fit_monitor(&x, 0.85, 0.05).unwrap();
        assert!(matches!(score_cycle(&m, &series(DMatrix::zeros(3, 3))), Err(Error::Dimension(_))));
        assert!(matches!(fit_monitor(&gaussian(3, 2, 1), 0.85, 0.05), Err(Error::Usage(_))));
        assert!(matches!(fit_monitor(&DMatrix::zeros(10, 2), 0.85, 0.05), Err(Error::Singular(_))));
        assert!(fit_monitor(&x, 0.0, 0.05).is_err());
    }

    #[test]
    fn full_variance_reconstructs_training_data() {
        let x = gaussian(50, 3, 6);
        let m = fit_monitor(&x, 1.0, 0.05).unwrap();
        assert_eq!(m.retained, 3);
        let centered = linalg::center_rows(&x, &m.center);
        let back = (&centered * m.loadings.transpose()) * &m.loadings;
        assert!((back - centered).norm() < 1e-8);
    }

    #[test]
    fn trace_csv_layout() {
        let s = CycleScore { cycle_index: 3, t2: vec![0.5, 2.0], abnormality_rate: 0.5 };
        let mut buf = Vec::new();
        write_t2_trace(&mut buf, &[s], 1.5).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cycle,k,t2,limit\n3,1,0.5,1.5\n3,2,2,1.5\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn statistics_are_rotation_invariant(seed in 0u64..1000) {
            let train = gaussian(200, 3, seed);
            let test = gaussian(30, 3, seed + 1) * 1.5;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_orthogonal(3, &mut rng);
            let a = score_cycle(&fit_monitor(&train, 1.0, 0.05).unwrap(), &series(test.clone())).unwrap();
            let b = score_cycle(&fit_monitor(&(&train * &q), 1.0, 0.05).unwrap(), &series(test * &q)).unwrap();
            for (x, y) in a.t2.iter().zip(&b.t2) {
                prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
                prop_assert!(*x >= 0.0);
            }
            prop_assert!((0.0..=1.0).contains(&a.abnormality_rate));
        }
    }
}

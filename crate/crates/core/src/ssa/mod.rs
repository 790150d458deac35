//! Cycling stationary subspace analysis.
//!
//! Each synchronized cycle is treated as one epoch. After pooled whitening
//! `W`, an orthogonal rotation `B` is sought whose first `d` rows make
//! every epoch's projected Gaussian as close as possible to `N(0, I)`.
//! The projector `B_s = (first d rows of B)·W` maps a centered cycle onto
//! its invariants.

mod adf;
mod objective;
mod optimize;
mod whiten;

pub use adf::{adf_is_stationary, adf_test, critical_value, mackinnon_p_value, schwert_lags, AdfResult};
pub use objective::{epoch_stats, kld_to_standard_normal, ssa_objective, EpochStats, SsaObjective};
pub use optimize::{descend, optimize_rotation, riemannian_gradient, DescentRun, OptimizerConfig};
pub use whiten::{pooled_whitener, Whitener, DEFAULT_RIDGE};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_serde, vector_serde};
use crate::psr::EmbeddedCycle;

/// Learned stationary subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryBasis {
    #[serde(with = "matrix_serde")]
    pub whitener: DMatrix<f64>,
    /// Pooled training mean subtracted before projection.
    #[serde(with = "vector_serde")]
    pub center: DVector<f64>,
    /// Orthogonal `B`.
    #[serde(with = "matrix_serde")]
    pub rotation: DMatrix<f64>,
    pub d: usize,
    /// `d × Jr` projector `(first d rows of B)·W`.
    #[serde(with = "matrix_serde")]
    pub projector: DMatrix<f64>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl StationaryBasis {
    pub fn new(
        whitener: Whitener,
        rotation: DMatrix<f64>,
        d: usize,
        objective_value: f64,
        converged: bool,
        iterations: usize,
    ) -> Self {
        let projector = rotation.rows(0, d) * &whitener.matrix;
        Self {
            whitener: whitener.matrix,
            center: whitener.center,
            rotation,
            d,
            projector,
            objective_value,
            converged,
            iterations,
        }
    }

    /// Embedding width `Jr` the basis was learned on.
    pub fn width(&self) -> usize {
        self.projector.ncols()
    }

    /// Invariant scores of raw rows: `(X − center)·B_sᵀ`.
    pub fn project(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        project_rows(&self.projector, data, &self.center)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn project_rows(projector: &DMatrix<f64>, data: &DMatrix<f64>, center: &DVector<f64>) -> Result<DMatrix<f64>> {
    if data.ncols() != projector.ncols() || center.len() != projector.ncols() {
        return Err(Error::Dimension(format!(
            "projection expects width {}, got data width {} and center length {}",
            projector.ncols(),
            data.ncols(),
            center.len()
        )));
    }
    Ok(linalg::center_rows(data, center) * projector.transpose())
}

/// Invariant scores `T_i` of one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSeries {
    pub cycle_index: usize,
    /// `rows × d`.
    #[serde(with = "matrix_serde")]
    pub scores: DMatrix<f64>,
}

/// Projects an embedded cycle onto the stationary subspace after removing
/// `center`.
pub fn project_invariants(basis: &StationaryBasis, cycle: &EmbeddedCycle, center: &DVector<f64>) -> Result<InvariantSeries> {
    Ok(InvariantSeries {
        cycle_index: cycle.cycle_index,
        scores: project_rows(&basis.projector, &cycle.data, center)?,
    })
}

/// Settings of the whole subspace fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub optimizer: OptimizerConfig,
    /// Level of the per-source ADF check used to choose `d`.
    pub adf_alpha: f64,
    /// Relative whitening ridge.
    pub ridge: f64,
    /// Use this `d` instead of the ADF scan.
    pub fixed_d: Option<usize>,
}

impl Default for SsaConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerConfig::default(), adf_alpha: 0.05, ridge: DEFAULT_RIDGE, fixed_d: None }
    }
}

/// Outcome of the stationary-dimension scan.
#[derive(Debug, Clone)]
pub struct DSelection {
    /// Accepted dimension, `0` when no candidate passed.
    pub d: usize,
    pub basis: Option<StationaryBasis>,
    /// ADF results of the accepted sources.
    pub adf: Vec<AdfResult>,
    /// Dimensions tried, in scan order.
    pub tried: Vec<usize>,
}

fn concatenated_scores(basis: &StationaryBasis, cycles: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let blocks = cycles.iter().map(|c| basis.project(c)).collect::<Result<Vec<_>>>()?;
    linalg::vstack(&blocks)
}

/// Scans `d` downward from the full width and keeps the first value whose
/// every concatenated score series passes the ADF test.
pub fn select_d(cycles: &[DMatrix<f64>], whitener: &Whitener, config: &SsaConfig) -> Result<DSelection> {
    let epochs = epoch_stats(cycles, &whitener.center)?;
    let n = whitener.dim();
    let mut tried = Vec::new();
    for d in (1..=n).rev() {
        tried.push(d);
        let basis = optimize_rotation(&epochs, whitener, d, &config.optimizer)?;
        let scores = concatenated_scores(&basis, cycles)?;
        let mut results = Vec::with_capacity(d);
        let mut all_pass = true;
        for j in 0..d {
            let series: Vec<f64> = scores.column(j).iter().copied().collect();
            match adf_test(&series, config.adf_alpha) {
                Ok(r) => {
                    all_pass &= r.stationary;
                    results.push(r);
                }
                Err(Error::Degenerate(msg)) => {
                    log::debug!("d={d}: source {j} is degenerate ({msg})");
                    all_pass = false;
                }
                Err(e) => return Err(e),
            }
            if !all_pass {
                break;
            }
        }
        log::debug!("d={d}: objective={:.4e} all sources stationary={all_pass}", basis.objective_value);
        if all_pass {
            return Ok(DSelection { d, basis: Some(basis), adf: results, tried });
        }
    }
    Ok(DSelection { d: 0, basis: None, adf: Vec::new(), tried })
}

/// Whitens synchronized training cycles and learns the stationary basis,
/// choosing `d` by the ADF scan unless it is fixed.
pub fn fit_stationary_basis(cycles: &[DMatrix<f64>], config: &SsaConfig) -> Result<DSelection> {
    let whitener = pooled_whitener(cycles, config.ridge)?;
    match config.fixed_d {
        Some(d) => {
            let epochs = epoch_stats(cycles, &whitener.center)?;
            let basis = optimize_rotation(&epochs, &whitener, d, &config.optimizer)?;
            Ok(DSelection { d, basis: Some(basis), adf: Vec::new(), tried: vec![d] })
        }
        None => select_d(cycles, &whitener, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psr::EmbeddingParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn basis_with_identity(n: usize, d: usize) -> StationaryBasis {
        let w = Whitener { matrix: DMatrix::identity(n, n), center: DVector::zeros(n) };
        StationaryBasis::new(w, DMatrix::identity(n, n), d, 0.0, true, 0)
    }

    fn embedded(data: DMatrix<f64>) -> EmbeddedCycle {
        EmbeddedCycle { cycle_index: 4, data, params: EmbeddingParams { tau: 1, r: 1 } }
    }

    #[test]
    fn identity_projection_keeps_first_columns() {
        let b = basis_with_identity(3, 2);
        let x = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        let t = project_invariants(&b, &embedded(x.clone()), &DVector::zeros(3)).unwrap();
        assert_eq!(t.cycle_index, 4);
        assert_eq!(t.scores, x.columns(0, 2).into_owned());
    }

    #[test]
    fn rows_at_center_project_to_zero() {
        let b = basis_with_identity(3, 2);
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = DMatrix::from_fn(4, 3, |_, j| c[j]);
        let t = project_invariants(&b, &embedded(x), &c).unwrap();
        assert!(t.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_is_a_dimension_error() {
        let b = basis_with_identity(3, 1);
        let x = DMatrix::zeros(4, 2);
        assert!(matches!(
            project_invariants(&b, &embedded(x), &DVector::zeros(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn projector_is_rotation_rows_times_whitener() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rot = linalg::random_orthogonal(4, &mut rng);
        let wm = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 });
        let w = Whitener { matrix: wm.clone(), center: DVector::zeros(4) };
        let b = StationaryBasis::new(w, rot.clone(), 2, 0.0, true, 0);
        assert_eq!(b.projector, rot.rows(0, 2) * wm);
        let back = StationaryBasis::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn pure_noise_keeps_every_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cycles: Vec<_> = (0..6).map(|_| DMatrix::from_fn(120, 3, |_, _| rng.sample(StandardNormal))).collect();
        let sel = fit_stationary_basis(&cycles, &SsaConfig::default()).unwrap();
        assert_eq!(sel.d, 3);
        assert_eq!(sel.tried, vec![3]);
    }
}

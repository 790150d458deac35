//! Sum of per-epoch Gaussian divergences of the projected stationary block.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::whiten::Whitener;
use crate::error::{Error, Result};
use crate::linalg::{self, matrix_serde, vector_serde};

/// Mean and covariance of one epoch (one synchronized cycle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    #[serde(with = "vector_serde")]
    pub mean: DVector<f64>,
    #[serde(with = "matrix_serde")]
    pub covariance: DMatrix<f64>,
}

impl EpochStats {
    /// Statistics of `cycle` after subtracting the pooled `center`.
    pub fn estimate(cycle: &DMatrix<f64>, center: &DVector<f64>) -> Result<Self> {
        if cycle.ncols() != center.len() {
            return Err(Error::Dimension(format!(
                "epoch width {} does not match center length {}",
                cycle.ncols(),
                center.len()
            )));
        }
        if cycle.nrows() < 2 {
            return Err(Error::Degenerate("an epoch needs at least 2 rows".into()));
        }
        let centered = linalg::center_rows(cycle, center);
        let mean = linalg::column_means(&centered);
        let covariance = linalg::covariance_about(&centered, &mean);
        Ok(Self { mean, covariance })
    }

    /// Statistics after the linear map `x ↦ A x`.
    pub fn transformed(&self, a: &DMatrix<f64>) -> Self {
        Self {
            mean: a * &self.mean,
            covariance: linalg::symmetrize(&(a * &self.covariance * a.transpose())),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Estimates per-epoch statistics around a shared center.
pub fn epoch_stats(cycles: &[DMatrix<f64>], center: &DVector<f64>) -> Result<Vec<EpochStats>> {
    cycles.iter().map(|c| EpochStats::estimate(c, center)).collect()
}

/// `D_KL( N(mean, cov) ‖ N(0, I) ) = ½(tr Σ − log det Σ + ‖u‖² − d)`.
pub fn kld_to_standard_normal(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<f64> {
    let d = mean.len();
    if covariance.nrows() != d || covariance.ncols() != d {
        return Err(Error::Dimension(format!(
            "covariance is {}x{} for a mean of length {d}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    if (covariance - covariance.transpose()).norm() > 1e-9 * covariance.norm().max(1.0) {
        return Err(Error::Domain("covariance is not symmetric".into()));
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("covariance is not positive definite".into()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let value = 0.5 * (covariance.trace() - log_det + mean.norm_squared() - d as f64);
    Ok(value.max(0.0))
}

/// The rotation objective over whitened epochs.
#[derive(Debug, Clone)]
pub struct SsaObjective {
    epochs: Vec<EpochStats>,
}

impl SsaObjective {
    /// Wraps epochs that are already expressed in whitened coordinates.
    pub fn from_whitened(epochs: Vec<EpochStats>) -> Result<Self> {
        let n = epochs.first().map(|e| e.dim()).ok_or_else(|| Error::Usage("no epochs".into()))?;
        if epochs.iter().any(|e| e.dim() != n) {
            return Err(Error::Dimension("epochs differ in dimension".into()));
        }
        Ok(Self { epochs })
    }

    /// Whitens centered epoch statistics with `W`.
    pub fn new(epochs: &[EpochStats], whitener: &Whitener) -> Result<Self> {
        if epochs.iter().any(|e| e.dim() != whitener.dim()) {
            return Err(Error::Dimension("epoch and whitener dimensions differ".into()));
        }
        Self::from_whitened(epochs.iter().map(|e| e.transformed(&whitener.matrix)).collect())
    }

    pub fn dim(&self) -> usize {
        self.epochs[0].dim()
    }

    pub fn n_epochs(&self) -> usize {
        self.epochs.len()
    }

    fn check(&self, rotation: &DMatrix<f64>, d: usize) -> Result<()> {
        let n = self.dim();
        if rotation.nrows() != n || rotation.ncols() != n {
            return Err(Error::Dimension(format!("rotation must be {n}x{n}")));
        }
        if d == 0 || d > n {
            return Err(Error::Usage(format!("stationary dimension {d} outside 1..={n}")));
        }
        Ok(())
    }

    /// Objective at `rotation`, using its first `d` rows.
    pub fn value(&self, rotation: &DMatrix<f64>, d: usize) -> Result<f64> {
        self.check(rotation, d)?;
        let bs = rotation.rows(0, d).into_owned();
        self.epochs
            .iter()
            .map(|e| {
                let p = e.transformed(&bs);
                kld_to_standard_normal(&p.mean, &p.covariance)
            })
            .sum()
    }

    /// Objective and its Euclidean gradient with respect to every entry of
    /// `rotation` (rows beyond `d` have zero gradient).
    pub fn value_and_gradient(&self, rotation: &DMatrix<f64>, d: usize) -> Result<(f64, DMatrix<f64>)> {
        self.check(rotation, d)?;
        let n = self.dim();
        let bs = rotation.rows(0, d).into_owned();
        let mut value = 0.0;
        let mut grad_s = DMatrix::zeros(d, n);
        for e in &self.epochs {
            let bs_cov = &bs * &e.covariance;
            let proj_cov = linalg::symmetrize(&(&bs_cov * bs.transpose()));
            let proj_mean = &bs * &e.mean;
            value += kld_to_standard_normal(&proj_mean, &proj_cov)?;
            let chol = proj_cov
                .cholesky()
                .ok_or_else(|| Error::Domain("projected covariance is not positive definite".into()))?;
            grad_s += &bs_cov - chol.solve(&bs_cov) + &proj_mean * e.mean.transpose();
        }
        let mut grad = DMatrix::zeros(n, n);
        grad.rows_mut(0, d).copy_from(&grad_s);
        Ok((value, grad))
    }
}

/// Objective for an orthogonal `rotation` given raw (centered) epochs and
/// the whitener.
pub fn ssa_objective(rotation: &DMatrix<f64>, d: usize, epochs: &[EpochStats], whitener: &Whitener) -> Result<f64> {
    if epochs.is_empty() {
        return Err(Error::Usage("objective needs at least one epoch".into()));
    }
    SsaObjective::new(epochs, whitener)?.value(rotation, d)
}

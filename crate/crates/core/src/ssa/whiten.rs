use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_serde, vector_serde};

/// Default relative ridge: `ε = 1e-10 · trace(Σ) / n`.
pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Pooled centering and symmetric whitening of a set of cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitener {
    /// `(Σ + εI)^(−1/2)`.
    #[serde(with = "matrix_serde")]
    pub matrix: DMatrix<f64>,
    /// Pooled mean of the training rows.
    #[serde(with = "vector_serde")]
    pub center: DVector<f64>,
}

impl Whitener {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Centers and whitens rows of `data`.
    pub fn apply(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "whitener expects width {}, got {}",
                self.dim(),
                data.ncols()
            )));
        }
        Ok(linalg::center_rows(data, &self.center) * &self.matrix)
    }
}

/// Builds the whitener of the row-concatenated cycles.
///
/// `relative_ridge` scales the ridge by the mean pooled variance; pass
/// `0.0` for an exact inverse square root, which fails on rank deficiency.
pub fn pooled_whitener(cycles: &[DMatrix<f64>], relative_ridge: f64) -> Result<Whitener> {
    let pooled = linalg::vstack(cycles)?;
    if pooled.nrows() < 2 {
        return Err(Error::Degenerate("whitening needs at least 2 rows".into()));
    }
    if !(relative_ridge >= 0.0 && relative_ridge.is_finite()) {
        return Err(Error::Usage(format!("ridge must be a non-negative number, got {relative_ridge}")));
    }
    let center = linalg::column_means(&pooled);
    let cov = linalg::covariance_about(&pooled, &center);
    let n = cov.nrows() as f64;
    let ridge = relative_ridge * cov.trace() / n;
    if relative_ridge > 0.0 && !(ridge > 0.0) {
        return Err(Error::Singular("pooled covariance is identically zero".into()));
    }
    let matrix = linalg::sym_inv_sqrt(&cov, ridge)?;
    Ok(Whitener { matrix, center })
}

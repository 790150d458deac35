//! Small dense linear-algebra helpers shared by the pipeline modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Column means of a samples-by-variables matrix.
pub fn column_means(data: &DMatrix<f64>) -> DVector<f64> {
    let n = data.nrows().max(1) as f64;
    DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n))
}

/// Subtracts `center` from every row.
pub fn center_rows(data: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
    }
    out
}

/// Unbiased covariance of rows around `center`.
pub fn covariance_about(data: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let centered = center_rows(data, center);
    let denom = (data.nrows() as f64 - 1.0).max(1.0);
    symmetrize(&(centered.transpose() * &centered / denom))
}

/// Unbiased sample covariance of rows.
pub fn covariance(data: &DMatrix<f64>) -> DMatrix<f64> {
    covariance_about(data, &column_means(data))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let cols = match blocks.first() {
        Some(b) => b.ncols(),
        None => return Err(Error::Usage("cannot stack zero matrices".into())),
    };
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::Dimension("stacked matrices differ in column count".into()));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    Ok(out)
}

/// Eigen-decomposition with eigenvalues sorted in descending order.
///
/// Returns the eigenvalues and a matrix whose columns are the matching
/// eigenvectors.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(sym));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

/// Symmetric inverse square root `(sym + ridge·I)^(-1/2)`.
///
/// Fails when any shifted eigenvalue is not safely positive.
pub fn sym_inv_sqrt(sym: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_eigen(sym);
    let n = values.len();
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = if ridge > 0.0 { 0.0 } else { top * 1e-12 };
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let shifted = values[i] + ridge;
        if shifted <= floor || !shifted.is_finite() || (ridge <= 0.0 && top == 0.0) {
            return Err(Error::Singular(format!(
                "eigenvalue {:.3e} (ridge {:.3e}) is not positive",
                values[i], ridge
            )));
        }
        scale[i] = shifted.powf(-0.5);
    }
    Ok(symmetrize(&(&vectors * DMatrix::from_diagonal(&scale) * vectors.transpose())))
}

/// Haar-distributed random orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// One Newton–Schulz polar step pulling a nearly orthogonal matrix back
/// onto the orthogonal group.
pub fn reorthonormalize(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let gram = b.transpose() * b;
    b * (DMatrix::identity(n, n) * 3.0 - gram) * 0.5
}

/// Frobenius distance of `BᵀB` from the identity.
pub fn orthogonality_error(b: &DMatrix<f64>) -> f64 {
    let n = b.ncols();
    (b.transpose() * b - DMatrix::identity(n, n)).norm()
}

/// Orthonormal basis (as columns) of the row space of `rows`.
fn row_space_basis(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let t = rows.transpose();
    let k = t.ncols().min(t.nrows());
    t.qr().q().columns(0, k).into_owned()
}

/// Principal angles in radians between the row spaces of two matrices with
/// the same column count, sorted ascending.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "principal angles need equal ambient dimension, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let qa = row_space_basis(a);
    let qb = row_space_basis(b);
    let svd = (qa.transpose() * qb).svd(false, false);
    let mut angles: Vec<f64> = svd.singular_values.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Serde adapter writing matrices row-major with explicit shape.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct MatrixDoc {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        MatrixDoc { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let doc = MatrixDoc::deserialize(d)?;
        if doc.rows * doc.cols != doc.data.len() {
            return Err(D::Error::custom(format!(
                "matrix shape {}x{} does not match {} values",
                doc.rows,
                doc.cols,
                doc.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(doc.rows, doc.cols, &doc.data))
    }
}

/// Serde adapter for vectors as plain arrays.
pub mod vector_serde {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

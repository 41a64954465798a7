use nalgebra::{DMatrix, DVector};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Least-squares solution of `design * beta = target` through the normal
/// equations. Fails when `designᵀ design` is not positive definite.
pub fn least_squares(design: &Matrix, target: &[f64]) -> Result<Vec<f64>> {
    if design.rows() != target.len() {
        return Err(Error::shape(
            "least_squares",
            format!("{} rows vs {} targets", design.rows(), target.len()),
        ));
    }
    if design.rows() < design.cols() {
        return Err(Error::Fit(format!(
            "{} rows cannot identify {} coefficients",
            design.rows(),
            design.cols()
        )));
    }
    let x = to_dmatrix(design);
    let y = DVector::from_column_slice(target);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    // relative conditioning check; Cholesky alone accepts nearly singular systems
    let diag_max = xtx.diagonal().iter().cloned().fold(0.0, f64::max);
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Fit("singular design matrix".into()))?;
    let min_pivot = chol.l().diagonal().iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-12 * diag_max.max(1e-300) {
        return Err(Error::Fit("singular design matrix".into()));
    }
    Ok(chol.solve(&xty).iter().copied().collect())
}

/// Symmetric square root `V diag(sqrt(max(λ, 0))) Vᵀ` of a covariance matrix.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if cov.is_empty() {
        return cov.clone();
    }
    let eig = cov.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semi-definite matrix.
pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.clone();
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = max * 1e-10 * m.nrows() as f64;
    let inv = eig.eigenvalues.map(|l| if l > tol { 1.0 / l } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let design = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let beta = least_squares(&design, &[1.0, 3.0, 5.0]).unwrap();
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_design_rejected() {
        let design = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(least_squares(&design, &[1.0, 2.0, 3.0]), Err(Error::Fit(_))));
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = psd_pinv(&m);
        let back = &m * &p * &m;
        assert!((back - m).abs().max() < 1e-12);
    }
}

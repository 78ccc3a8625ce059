use nalgebra::{DMatrix, SymmetricEigen};

use super::FlatError;

/// Symmetric PSD square root via the eigendecomposition, with negative
/// eigenvalues (rounding noise) clamped to zero.
pub fn psd_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, FlatError> {
    let d = sigma.nrows();
    if sigma.ncols() != d {
        return Err(FlatError::NotSquare {
            rows: d,
            cols: sigma.ncols(),
        });
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(FlatError::NonFinite);
    }
    let scale = sigma.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut asym = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            asym = asym.max((sigma[(i, j)] - sigma[(j, i)]).abs());
        }
    }
    if asym > 1e-9 * scale {
        return Err(FlatError::Asymmetric(asym));
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&roots) * q.transpose();
    // exact symmetry regardless of rounding in the product
    for i in 0..d {
        for j in (i + 1)..d {
            let m = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = m;
            out[(j, i)] = m;
        }
    }
    Ok(out)
}

//! Sylvester equation `A X + X B = C` for symmetric positive semidefinite
//! `A` and `B`.
//!
//! With `A = U Λ Uᵀ` and `B = V M Vᵀ` the equation decouples in the rotated
//! basis: `X̂ = Uᵀ C V`, `X̂_ij /= (λ_i + μ_j)`, `X = U X̂ Vᵀ`. This is the
//! symmetric special case of Bartels-Stewart where both Schur forms are
//! diagonal.

use crate::error::{Error, Result};
use crate::matrix::{sym_eigen, DenseMatrix, DEFAULT_TOL};

/// Smallest eigenvalue-pair sum `λ_i + μ_j` solved without regularization.
pub const MIN_PAIR_SUM: f64 = 1e-8;

/// Negative eigenvalues down to `-PSD_TOL * max(1, ‖M‖_F)` are treated as rounding.
pub const PSD_TOL: f64 = 1e-9;

/// Solves `a X + X b = c`.
///
/// `a` is k x k, `b` is n x n, `c` is k x n. If some eigenvalue-pair sum falls
/// below [`MIN_PAIR_SUM`], every denominator is shifted by `ridge`; with
/// `ridge == 0` that case is an [`Error::Singular`].
pub fn sylvester_solve(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix, ridge: f64) -> Result<DenseMatrix> {
    let (k, n) = c.shape();
    if a.shape() != (k, k) {
        return Err(Error::shape(
            "sylvester_solve",
            format!("a of shape {k}x{k}"),
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    if b.shape() != (n, n) {
        return Err(Error::shape(
            "sylvester_solve",
            format!("b of shape {n}x{n}"),
            format!("{}x{}", b.rows(), b.cols()),
        ));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::validation(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    if k == 0 || n == 0 {
        return Ok(DenseMatrix::zeros(k, n));
    }

    let ea = sym_eigen(a, DEFAULT_TOL)?;
    let eb = sym_eigen(b, DEFAULT_TOL)?;
    check_psd("a", &ea.eigenvalues, a)?;
    check_psd("b", &eb.eigenvalues, b)?;

    let min_pair = ea.eigenvalues[0] + eb.eigenvalues[0];
    let shift = if min_pair >= MIN_PAIR_SUM {
        0.0
    } else if ridge > 0.0 {
        ridge
    } else {
        return Err(Error::Singular {
            min_pair_sum: min_pair,
            threshold: MIN_PAIR_SUM,
            hint: "increase lambda or pass a positive ridge",
        });
    };

    let u = &ea.eigenvectors;
    let v = &eb.eigenvectors;
    let mut rotated = u.t_matmul(c)?.matmul(v)?;
    for (i, li) in ea.eigenvalues.iter().enumerate() {
        for (j, mj) in eb.eigenvalues.iter().enumerate() {
            let denom = li + mj + shift;
            if denom <= 0.0 {
                // Only reachable through rounding when shift is tiny.
                return Err(Error::Singular {
                    min_pair_sum: denom,
                    threshold: MIN_PAIR_SUM,
                    hint: "ridge too small for this system; increase it",
                });
            }
            rotated[(i, j)] /= denom;
        }
    }
    u.matmul(&rotated)?.matmul(&v.transpose())
}

/// `‖a X + X b − c‖_F / max(1, ‖c‖_F)`.
pub fn sylvester_residual(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix, x: &DenseMatrix) -> Result<f64> {
    let lhs = a.matmul(x)?.add(&x.matmul(b)?)?;
    Ok(lhs.sub(c)?.frobenius_norm() / c.frobenius_norm().max(1.0))
}

fn check_psd(name: &str, eigenvalues: &[f64], m: &DenseMatrix) -> Result<()> {
    let floor = -PSD_TOL * m.frobenius_norm().max(1.0);
    match eigenvalues.first() {
        Some(&min) if min < floor => Err(Error::validation(format!(
            "sylvester_solve: {name} is not positive semidefinite (min eigenvalue {min:e})"
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_coefficients_halve_rhs() {
        let i2 = DenseMatrix::identity(2);
        let c = DenseMatrix::from_rows(&[[2.0, 4.0], [6.0, 8.0]]).unwrap();
        let w = sylvester_solve(&i2, &i2, &c, 0.0).unwrap();
        let want = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(w.sub(&want).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn diagonal_closed_form() {
        let a = DenseMatrix::from_diag(&[1.0, 2.0]).unwrap();
        let b = DenseMatrix::from_diag(&[3.0, 4.0]).unwrap();
        let c = DenseMatrix::from_rows(&[[1.5, -2.0], [7.0, 0.25]]).unwrap();
        let w = sylvester_solve(&a, &b, &c, 0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = c[(i, j)] / (a[(i, i)] + b[(j, j)]);
                assert!((w[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = DenseMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let b = DenseMatrix::identity(3);
        let w = sylvester_solve(&a, &b, &DenseMatrix::zeros(2, 3), 0.0).unwrap();
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn singular_without_ridge_and_ridge_path() {
        let z = DenseMatrix::zeros(2, 2);
        let c = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sylvester_solve(&z, &z, &c, 0.0), Err(Error::Singular { .. })));
        let w = sylvester_solve(&z, &z, &c, 0.5).unwrap();
        assert!(w.sub(&c.scale(2.0)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn shape_errors() {
        let a = DenseMatrix::identity(2);
        let b = DenseMatrix::identity(3);
        assert!(matches!(
            sylvester_solve(&a, &b, &DenseMatrix::zeros(3, 2), 0.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn indefinite_rejected() {
        let a = DenseMatrix::from_diag(&[-1.0, 2.0]).unwrap();
        let b = DenseMatrix::identity(2);
        assert!(matches!(
            sylvester_solve(&a, &b, &DenseMatrix::identity(2), 0.0),
            Err(Error::Validation(_))
        ));
    }
}

//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Sweep cap for the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Default convergence threshold: off-diagonal Frobenius norm relative to the
/// Frobenius norm of the input.
pub const DEFAULT_TOL: f64 = 1e-11;

/// Largest tolerated `|a_ij - a_ji|` for an input to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `A = U diag(eigenvalues) Uᵀ` with eigenvalues ascending and the columns of
/// `eigenvectors` orthonormal.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl SymEigen {
    /// Rebuilds `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let u = &self.eigenvectors;
        let n = u.rows();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n).map(|l| u[(i, l)] * self.eigenvalues[l] * u[(j, l)]).sum();
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Converges when the off-diagonal Frobenius norm drops to `tol` times the
/// Frobenius norm of `a`. Gives up with [`Error::Convergence`] after
/// [`MAX_SWEEPS`] sweeps.
pub fn sym_eigen(a: &DenseMatrix, tol: f64) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::validation(format!(
            "sym_eigen needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::validation(format!("tolerance must be positive, got {tol}")));
    }
    let asym = a.max_asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOL {
        return Err(Error::validation(format!(
            "sym_eigen needs a symmetric matrix, max asymmetry {asym:e}"
        )));
    }

    let n = a.rows();
    // Work on the exactly symmetrized copy.
    let mut m = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = tol * a.frobenius_norm();

    let mut converged = false;
    let mut off = off_diagonal_norm(&m);
    for _ in 0..MAX_SWEEPS {
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
        off = off_diagonal_norm(&m);
    }
    if !converged && off > target {
        return Err(Error::Convergence {
            sweeps: MAX_SWEEPS,
            residual: off,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating `m[(p, q)]`, accumulated into `v`.
fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = m.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

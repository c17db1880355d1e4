//! Discrete-time algebraic Riccati equation solver.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Iteration controls for [`solve_dare`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DareOptions {
    /// Fixed-point residual target (Frobenius norm).
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in (0, 1]; 1 is the plain iteration.
    pub damping: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        DareOptions {
            tol: 1e-12,
            max_iter: 50_000,
            damping: 1.0,
        }
    }
}

/// Riccati update `T(S) = AᵀSA − AᵀSB(R + BᵀSB)⁻¹BᵀSA + Q`.
fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let at_s = a.transpose() * s;
    let bt_s_b = b.transpose() * s * b;
    let inner = r + bt_s_b;
    let inner_inv = inner.clone().try_inverse().ok_or_else(|| {
        Error::Numerics("riccati update: R + BᵀSB is singular".into())
    })?;
    let gain_term = &at_s * b * inner_inv * b.transpose() * s * a;
    Ok(&at_s * a - gain_term + q)
}

/// Solve `S = AᵀSA − AᵀSB(R + BᵀSB)⁻¹BᵀSA + Q` by damped fixed-point
/// iteration from `S₀ = Q`, symmetrizing every iterate.
///
/// Fails with the last residual when the iteration does not reach `tol`
/// within `max_iter`, which typically signals an unstabilizable pair.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: &DareOptions,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) || b.nrows() != n {
        return Err(Error::Config(format!(
            "dare: inconsistent shapes A {:?}, B {:?}, Q {:?}",
            a.shape(),
            b.shape(),
            q.shape()
        )));
    }
    let m = b.ncols();
    if r.shape() != (m, m) {
        return Err(Error::Config(format!(
            "dare: R must be {m}x{m}, got {:?}",
            r.shape()
        )));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Config("dare: damping must lie in (0, 1]".into()));
    }
    let mut s = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let mapped = riccati_map(a, b, q, r, &s)?;
        residual = (&mapped - &s).norm();
        let mut next = if opts.damping < 1.0 {
            &s * (1.0 - opts.damping) + mapped * opts.damping
        } else {
            mapped
        };
        // Symmetrize to keep rounding from drifting the iterate.
        next = (&next + next.transpose()) * 0.5;
        s = next;
        if residual <= opts.tol {
            let check = (riccati_map(a, b, q, r, &s)? - &s).norm();
            if check <= opts.tol.max(1e-10) {
                return Ok(s);
            }
        }
    }
    Err(Error::Numerics(format!(
        "dare did not converge within {} iterations (last residual {residual:.3e})",
        opts.max_iter
    )))
}

/// LQR feedback gain `K = (R + BᵀSB)⁻¹BᵀSA` for a DARE solution `S`.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let inner = r + b.transpose() * s * b;
    let inner_inv = inner
        .try_inverse()
        .ok_or_else(|| Error::Numerics("lqr gain: R + BᵀSB is singular".into()))?;
    Ok(inner_inv * b.transpose() * s * a)
}

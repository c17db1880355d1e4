//! Least-squares fit of the finite-dimensional transfer operator.
//!
//! The operator solves `min_K Σ‖Ψ_{k+1} − KΨ_k‖²` over the snapshot pairs,
//! with the closed form `K = F(G + λI)†` where `F = (1/M)Σ Ψ_{k+1}Ψ_kᵀ`
//! and `G = (1/M)Σ Ψ_kΨ_kᵀ`. The pseudoinverse is taken by SVD with a
//! relative singular-value cutoff.

use nalgebra::{DMatrix, DVector};

use super::dictionary::ObservableDictionary;
use super::snapshots::SnapshotMatrices;
use crate::error::{Error, Result};

/// Relative singular-value cutoff used by every pseudoinverse here.
pub const SVD_CUTOFF_REL: f64 = 1e-10;

/// Fit quality indicators recorded alongside each operator.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitDiagnostics {
    /// Relative residual `‖D⁺ − K D‖_F / ‖D⁺‖_F`.
    pub residual: f64,
    /// Condition number of `G` (after ridge, before cutoff).
    pub cond_g: f64,
    pub pair_count: usize,
    /// True when `G` was rank-deficient at the cutoff and the fit fell
    /// back to the pseudoinverse with no ridge.
    pub rank_deficient: bool,
}

/// Symmetric pseudoinverse with relative cutoff; also reports the
/// condition number and whether the cutoff discarded directions.
fn pinv_sym(g: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64, bool)> {
    let svd = g.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax.is_finite()) {
        return Err(Error::Numerics("pseudoinverse: non-finite spectrum".into()));
    }
    let cutoff = smax * SVD_CUTOFF_REL;
    let smin = svd.singular_values.min();
    let rank_deficient = smin <= cutoff;
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let inv_s = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values
            .iter()
            .map(|&s| if s > cutoff { 1.0 / s } else { 0.0 }),
    );
    // pinv = V Σ⁺ Uᵀ
    let mut scaled_ut = u.transpose();
    for (i, mut row) in scaled_ut.row_iter_mut().enumerate() {
        row *= inv_s[i];
    }
    Ok((vt.transpose() * scaled_ut, cond, rank_deficient))
}

/// Fit the full P×P operator from snapshot pairs.
pub fn fit_edmd(snap: &SnapshotMatrices, ridge: f64) -> Result<(DMatrix<f64>, FitDiagnostics)> {
    if ridge < 0.0 {
        return Err(Error::Config("ridge weight must be non-negative".into()));
    }
    let m = snap.pair_count as f64;
    let f = &snap.next * snap.current.transpose() / m;
    let mut g = &snap.current * snap.current.transpose() / m;
    for i in 0..g.nrows() {
        g[(i, i)] += ridge;
    }
    let (g_pinv, cond_g, rank_deficient) = pinv_sym(&g)?;
    let k = f * g_pinv;
    let denom = snap.next.norm();
    let residual = if denom > 0.0 {
        (&snap.next - &k * &snap.current).norm() / denom
    } else {
        0.0
    };
    Ok((
        k,
        FitDiagnostics {
            residual,
            cond_g,
            pair_count: snap.pair_count,
            rank_deficient: rank_deficient && ridge == 0.0,
        },
    ))
}

/// Slice the top block row `[K_xx | K_xu]`; the rows that would evolve the
/// input observables are discarded.
pub fn partition_operator(
    k_full: &DMatrix<f64>,
    dict: &ObservableDictionary,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n_x = dict.state_dim();
    let n_u = dict.input_dim();
    assert_eq!(k_full.nrows(), n_x + n_u, "operator size mismatch");
    let k_xx = k_full.view((0, 0), (n_x, n_x)).into_owned();
    let k_xu = k_full.view((0, n_x), (n_x, n_u)).into_owned();
    (k_xx, k_xu)
}

/// Least-squares recovery map `C` (3×n_x) from stacked state lifts back to
/// the augmented state, pooled over all provided samples.
pub fn fit_projection_from_lifts(
    lifted_states: &DMatrix<f64>,
    states: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64, bool)> {
    if lifted_states.ncols() != states.ncols() || states.nrows() != 3 {
        return Err(Error::Data(format!(
            "projection fit shape mismatch: lifts {}x{}, states {}x{}",
            lifted_states.nrows(),
            lifted_states.ncols(),
            states.nrows(),
            states.ncols()
        )));
    }
    let m = lifted_states.ncols() as f64;
    let g = lifted_states * lifted_states.transpose() / m;
    let f = states * lifted_states.transpose() / m;
    let (g_pinv, _cond, rank_deficient) = pinv_sym(&g)?;
    let c = f * g_pinv;
    let denom = states.norm();
    let residual = if denom > 0.0 {
        (states - &c * lifted_states).norm() / denom
    } else {
        0.0
    };
    Ok((c, residual, rank_deficient))
}

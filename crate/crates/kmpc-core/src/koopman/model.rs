//! Phase-indexed lifted linear predictor and its file format.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::dictionary::ObservableDictionary;
use super::edmd::{fit_edmd, fit_projection_from_lifts, partition_operator, FitDiagnostics};
use super::snapshots::{build_snapshots, lift_at};
use crate::error::{Error, Result};
use crate::plant::{AugmentedSeries, Phase};

/// Fitted operator blocks for one gait phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOperators {
    /// Lifted-state transition block (n_x × n_x).
    pub k_xx: DMatrix<f64>,
    /// Lifted input block (n_x × n_u).
    pub k_xu: DMatrix<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Switched linear predictor in lifted space with a shared recovery map.
#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanModel {
    pub dictionary: ObservableDictionary,
    pub stance: PhaseOperators,
    pub swing: PhaseOperators,
    /// Recovery map `C` (3 × n_x): `z = C ψ`.
    pub recovery: DMatrix<f64>,
    /// Relative residual of the recovery fit.
    pub projection_residual: f64,
    /// SHA-256 of the training configuration, for pipeline integrity.
    pub training_config_hash: String,
}

impl KoopmanModel {
    pub fn operators(&self, phase: Phase) -> &PhaseOperators {
        match phase {
            Phase::Stance => &self.stance,
            Phase::Swing => &self.swing,
        }
    }

    /// One prediction step in lifted space.
    ///
    /// `psi` is the stacked state lift; `u_window` holds the inputs
    /// newest-first (length `L`). Returns the advanced lift and its
    /// projection.
    pub fn predict_step(
        &self,
        psi: &DVector<f64>,
        u_window: &[f64],
        phase: Phase,
    ) -> (DVector<f64>, Vector3<f64>) {
        let ops = self.operators(phase);
        let u_lift = self.dictionary.lift_input_window(u_window);
        let psi_next = &ops.k_xx * psi + &ops.k_xu * u_lift;
        let z_next = self.project(&psi_next);
        (psi_next, z_next)
    }

    /// Project a lifted state back to `z = [e_θ, e_θ̇, θ_d]`.
    pub fn project(&self, psi: &DVector<f64>) -> Vector3<f64> {
        let z = &self.recovery * psi;
        Vector3::new(z[0], z[1], z[2])
    }

    /// Iterate [`Self::predict_step`] in lifted space (no re-lifting) and
    /// return the projected trajectory.
    ///
    /// `initial_z`/`initial_u` hold the warm-up window newest-first
    /// (length `L`); `inputs[j]`/`phases[j]` drive step `j`.
    pub fn rollout_predict(
        &self,
        initial_z: &[Vector3<f64>],
        initial_u: &[f64],
        inputs: &[f64],
        phases: &[Phase],
        horizon: usize,
    ) -> Result<Vec<Vector3<f64>>> {
        let l = self.dictionary.embedding;
        if initial_z.len() != l || initial_u.len() != l {
            return Err(Error::Data(format!(
                "rollout warm-up window must hold L = {l} samples"
            )));
        }
        if inputs.len() < horizon || phases.len() < horizon {
            return Err(Error::Data(format!(
                "rollout needs {horizon} inputs and phases, got {} and {}",
                inputs.len(),
                phases.len()
            )));
        }
        let mut psi = self.dictionary.lift_state_window(initial_z);
        let mut u_window: Vec<f64> = initial_u.to_vec();
        let mut out = Vec::with_capacity(horizon);
        for j in 0..horizon {
            // Shift the input window: newest first.
            u_window.rotate_right(1);
            u_window[0] = inputs[j];
            let (psi_next, z_next) = self.predict_step(&psi, &u_window, phases[j]);
            out.push(z_next);
            psi = psi_next;
        }
        Ok(out)
    }

    /// Projected three-state predictor `(Ã, B̃)` for one phase, using the
    /// Moore-Penrose right-inverse of the recovery map. Kept for fidelity
    /// experiments; the lifted predictor is the canonical path.
    pub fn projected_predictor(&self, phase: Phase) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let ops = self.operators(phase);
        let c = &self.recovery;
        let c_pinv = c
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerics(format!("recovery map pseudoinverse failed: {e}")))?;
        let a = c * &ops.k_xx * &c_pinv;
        // The input block projects directly; summing the embedded input
        // slots keeps the map single-input.
        let b_full = c * &ops.k_xu;
        let mut b = DMatrix::zeros(3, 1);
        for j in 0..b_full.ncols() {
            for i in 0..3 {
                b[(i, 0)] += b_full[(i, j)];
            }
        }
        Ok((a, b))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from_model(self);
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Data(format!("model serialization failed: {e}")))?;
        std::fs::write(path, json).map_err(|err| Error::io(path, err))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: bad model file: {e}", path.display())))?;
        file.into_model()
    }
}

/// Fit both phase operators and the shared recovery map from an augmented
/// series.
pub fn fit_model(
    series: &AugmentedSeries,
    dict: &ObservableDictionary,
    ridge: f64,
    training_config_hash: String,
) -> Result<KoopmanModel> {
    let mut per_phase = Vec::with_capacity(2);
    for phase in [Phase::Stance, Phase::Swing] {
        let snap = build_snapshots(series, dict, phase)?;
        let (k_full, diagnostics) = fit_edmd(&snap, ridge)?;
        let (k_xx, k_xu) = partition_operator(&k_full, dict);
        per_phase.push(PhaseOperators {
            k_xx,
            k_xu,
            diagnostics,
        });
    }
    let (recovery, projection_residual) = fit_projection(series, dict)?;
    let swing = per_phase.pop().expect("two phases fitted");
    let stance = per_phase.pop().expect("two phases fitted");
    Ok(KoopmanModel {
        dictionary: *dict,
        stance,
        swing,
        recovery,
        projection_residual,
        training_config_hash,
    })
}

/// Least-squares recovery map over all samples, both phases pooled.
pub fn fit_projection(
    series: &AugmentedSeries,
    dict: &ObservableDictionary,
) -> Result<(DMatrix<f64>, f64)> {
    let n_x = dict.state_dim();
    let total: usize = series.episodes.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::Data("projection fit: empty series".into()));
    }
    let mut lifts = DMatrix::zeros(n_x, total);
    let mut states = DMatrix::zeros(3, total);
    let mut j = 0;
    for episode in &series.episodes {
        for k in 0..episode.len() {
            let psi = lift_at(dict, episode, k);
            lifts.view_mut((0, j), (n_x, 1))
                .copy_from(&psi.rows(0, n_x));
            states.view_mut((0, j), (3, 1)).copy_from(&episode[k].0);
            j += 1;
        }
    }
    let (c, residual, _rank_deficient) = fit_projection_from_lifts(&lifts, &states)?;
    Ok((c, residual))
}

/// Serialized model layout: matrices as row-major arrays.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    dictionary: ObservableDictionary,
    stance: PhaseBlock,
    swing: PhaseBlock,
    recovery: MatrixData,
    projection_residual: f64,
    training_config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct PhaseBlock {
    k_xx: MatrixData,
    k_xu: MatrixData,
    diagnostics: FitDiagnostics,
}

/// Row-major dense matrix payload.
#[derive(Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Data(format!(
                "matrix payload: {}x{} needs {} entries, got {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl ModelFile {
    fn from_model(m: &KoopmanModel) -> Self {
        let block = |ops: &PhaseOperators| PhaseBlock {
            k_xx: MatrixData::from_matrix(&ops.k_xx),
            k_xu: MatrixData::from_matrix(&ops.k_xu),
            diagnostics: ops.diagnostics.clone(),
        };
        ModelFile {
            dictionary: m.dictionary,
            stance: block(&m.stance),
            swing: block(&m.swing),
            recovery: MatrixData::from_matrix(&m.recovery),
            projection_residual: m.projection_residual,
            training_config_hash: m.training_config_hash.clone(),
        }
    }

    fn into_model(self) -> Result<KoopmanModel> {
        let to_ops = |b: &PhaseBlock| -> Result<PhaseOperators> {
            Ok(PhaseOperators {
                k_xx: b.k_xx.to_matrix()?,
                k_xu: b.k_xu.to_matrix()?,
                diagnostics: b.diagnostics.clone(),
            })
        };
        let model = KoopmanModel {
            dictionary: self.dictionary,
            stance: to_ops(&self.stance)?,
            swing: to_ops(&self.swing)?,
            recovery: self.recovery.to_matrix()?,
            projection_residual: self.projection_residual,
            training_config_hash: self.training_config_hash,
        };
        let n_x = model.dictionary.state_dim();
        let n_u = model.dictionary.input_dim();
        for (ops, name) in [(&model.stance, "stance"), (&model.swing, "swing")] {
            if ops.k_xx.shape() != (n_x, n_x) || ops.k_xu.shape() != (n_x, n_u) {
                return Err(Error::Data(format!(
                    "model file: {name} operator shape disagrees with dictionary"
                )));
            }
        }
        if model.recovery.shape() != (3, n_x) {
            return Err(Error::Data(
                "model file: recovery map shape disagrees with dictionary".into(),
            ));
        }
        Ok(model)
    }
}

//! Condensation of the switched horizon dynamics into a box-constrained
//! quadratic program in the stacked input vector.
//!
//! Predicted states over the horizon obey
//! `ψ_{j+1} = A^{σ_j} ψ_j + B^{σ_j} u_j`, stacked as `Ψ = Γψ₀ + ΦU`.
//! The cost runs the error weight over steps 1..T-1 and replaces it at
//! the terminal step with the phase-selected Riccati weight, so an
//! unconstrained solve reproduces the infinite-horizon feedback law.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, RowDVector};

use super::config::{MpcConfig, PredictionSpace};
use super::dare::solve_dare;
use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;
use crate::plant::Phase;

/// Per-phase predictor matrices in the controlled coordinate space, plus
/// the output map back to `z`.
#[derive(Clone, Debug)]
pub struct PredictionMatrices {
    pub a_stance: DMatrix<f64>,
    pub a_swing: DMatrix<f64>,
    pub b_stance: DMatrix<f64>,
    pub b_swing: DMatrix<f64>,
    /// Output map (3×n): `z = C ψ`.
    pub c: DMatrix<f64>,
    pub dim: usize,
}

impl PredictionMatrices {
    pub fn from_model(model: &KoopmanModel, space: PredictionSpace) -> Result<Self> {
        if model.dictionary.embedding != 1 {
            return Err(Error::Config(format!(
                "the controller requires embedding length 1, model has L = {}",
                model.dictionary.embedding
            )));
        }
        match space {
            PredictionSpace::Lifted => {
                let n = model.dictionary.state_dim();
                Ok(PredictionMatrices {
                    a_stance: model.stance.k_xx.clone(),
                    a_swing: model.swing.k_xx.clone(),
                    b_stance: model.stance.k_xu.clone(),
                    b_swing: model.swing.k_xu.clone(),
                    c: model.recovery.clone(),
                    dim: n,
                })
            }
            PredictionSpace::Projected => {
                let (a_stance, b_stance) = model.projected_predictor(Phase::Stance)?;
                let (a_swing, b_swing) = model.projected_predictor(Phase::Swing)?;
                Ok(PredictionMatrices {
                    a_stance,
                    a_swing,
                    b_stance,
                    b_swing,
                    c: DMatrix::identity(3, 3),
                    dim: 3,
                })
            }
        }
    }

    pub fn a(&self, phase: Phase) -> &DMatrix<f64> {
        match phase {
            Phase::Stance => &self.a_stance,
            Phase::Swing => &self.a_swing,
        }
    }

    pub fn b(&self, phase: Phase) -> &DMatrix<f64> {
        match phase {
            Phase::Stance => &self.b_stance,
            Phase::Swing => &self.b_swing,
        }
    }

    /// Error selector `E` (2×n): the tracking-error rows of the output map.
    pub fn error_selector(&self) -> DMatrix<f64> {
        self.c.rows(0, 2).into_owned()
    }

    /// Predicted-angle row `θ = z₁ + z₃`.
    pub fn angle_row(&self) -> RowDVector<f64> {
        RowDVector::from_iterator(
            self.dim,
            (0..self.dim).map(|j| self.c[(0, j)] + self.c[(2, j)]),
        )
    }

    /// Predicted error-velocity row `e_θ̇ = z₂`.
    pub fn velocity_row(&self) -> RowDVector<f64> {
        self.c.row(1).into_owned()
    }

    /// Running weight lifted through the error selector with a small
    /// uniform floor.
    pub fn lifted_q(&self, config: &MpcConfig) -> DMatrix<f64> {
        let e = self.error_selector();
        let q2 = config.q_matrix();
        let mut q = e.transpose() * q2 * e;
        for i in 0..self.dim {
            q[(i, i)] += config.q_lift_reg;
        }
        q
    }
}

/// Phase-selected terminal weights from one Riccati solve per phase.
pub fn terminal_weights(
    matrices: &PredictionMatrices,
    config: &MpcConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = matrices.lifted_q(config);
    let mut out = Vec::with_capacity(2);
    for phase in [Phase::Stance, Phase::Swing] {
        let r = DMatrix::from_element(1, 1, config.r_weight(phase));
        let s = solve_dare(matrices.a(phase), matrices.b(phase), &q, &r, &config.dare)
            .map_err(|e| {
                Error::Numerics(format!("terminal weight for {} phase: {e}", phase.name()))
            })?;
        out.push(s);
    }
    let s_swing = out.pop().expect("two phases");
    let s_stance = out.pop().expect("two phases");
    Ok((s_stance, s_swing))
}

/// Pattern-dependent condensed matrices, cacheable by the σ sequence.
#[derive(Clone, Debug)]
pub struct HorizonDynamics {
    /// Operator tag per horizon step; row-block j of `gamma`/`phi` was
    /// built with `A^{σ_j}`, `B^{σ_j}`.
    pub sigma: Vec<Phase>,
    /// Stacked free response (T·n × n).
    pub gamma: DMatrix<f64>,
    /// Stacked forced response (T·n × T).
    pub phi: DMatrix<f64>,
    /// Quadratic coefficient of the condensed cost (T×T, includes the
    /// factor two).
    pub h: DMatrix<f64>,
    /// Output map copy (3×n).
    pub c: DMatrix<f64>,
    /// Predicted-angle maps: `θ = theta_x ψ₀ + theta_u U` per step.
    pub theta_u: DMatrix<f64>,
    pub theta_x: DMatrix<f64>,
    /// Predicted error-velocity maps.
    pub vel_u: DMatrix<f64>,
    pub vel_x: DMatrix<f64>,
    /// Terminal block rows and the phase-selected terminal weight.
    pub phi_t: DMatrix<f64>,
    pub gamma_t: DMatrix<f64>,
    pub s_terminal: DMatrix<f64>,
    pub terminal_phase: Phase,
    /// Block-diagonal state weights stacked over the horizon (n×n each).
    pub q_blocks: Vec<DMatrix<f64>>,
    /// Upper bound on the objective's gradient Lipschitz constant,
    /// including every penalty term at full activity.
    pub lipschitz: f64,
}

impl HorizonDynamics {
    /// Build the condensed matrices for one σ pattern.
    pub fn build(
        matrices: &PredictionMatrices,
        config: &MpcConfig,
        s_stance: &DMatrix<f64>,
        s_swing: &DMatrix<f64>,
        sigma: &[Phase],
    ) -> Result<Self> {
        let t = sigma.len();
        if t == 0 {
            return Err(Error::Config("horizon must contain at least one step".into()));
        }
        let n = matrices.dim;
        let q_bar = matrices.lifted_q(config);
        let terminal_phase = sigma[t - 1];
        let s_terminal = match terminal_phase {
            Phase::Stance => s_stance.clone(),
            Phase::Swing => s_swing.clone(),
        };

        let mut gamma = DMatrix::zeros(t * n, n);
        let mut phi = DMatrix::zeros(t * n, t);
        let mut running = DMatrix::identity(n, n);
        for j in 0..t {
            let a = matrices.a(sigma[j]);
            let b = matrices.b(sigma[j]);
            if j == 0 {
                phi.view_mut((0, 0), (n, 1)).copy_from(b);
            } else {
                // New row block: propagate the previous one by A and add
                // the fresh input column.
                let prev = phi.view(((j - 1) * n, 0), (n, j)).into_owned();
                let propagated = a * prev;
                phi.view_mut((j * n, 0), (n, j)).copy_from(&propagated);
                phi.view_mut((j * n, j), (n, 1)).copy_from(b);
            }
            running = a * running;
            gamma.view_mut((j * n, 0), (n, n)).copy_from(&running);
        }

        // Stage weights: running Q on steps 1..T-1, Riccati weight at T.
        let mut q_blocks = Vec::with_capacity(t);
        for j in 0..t {
            if j + 1 < t {
                q_blocks.push(q_bar.clone());
            } else {
                q_blocks.push(s_terminal.clone());
            }
        }

        // H = 2 (Φᵀ Q̂ Φ + R̂)
        let mut qhat_phi = DMatrix::zeros(t * n, t);
        for j in 0..t {
            let block = q_blocks[j].clone() * phi.view((j * n, 0), (n, t));
            qhat_phi.view_mut((j * n, 0), (n, t)).copy_from(&block);
        }
        let mut h = phi.transpose() * qhat_phi;
        for j in 0..t {
            h[(j, j)] += config.r_weight(sigma[j]);
        }
        h *= 2.0;
        h = (&h + h.transpose()) * 0.5;

        let angle = matrices.angle_row();
        let vel = matrices.velocity_row();
        let mut theta_u = DMatrix::zeros(t, t);
        let mut theta_x = DMatrix::zeros(t, n);
        let mut vel_u = DMatrix::zeros(t, t);
        let mut vel_x = DMatrix::zeros(t, n);
        for j in 0..t {
            let phi_j = phi.view((j * n, 0), (n, t));
            let gamma_j = gamma.view((j * n, 0), (n, n));
            theta_u.row_mut(j).copy_from(&(&angle * phi_j));
            theta_x.row_mut(j).copy_from(&(&angle * gamma_j));
            vel_u.row_mut(j).copy_from(&(&vel * phi_j));
            vel_x.row_mut(j).copy_from(&(&vel * gamma_j));
        }

        let phi_t = phi.view(((t - 1) * n, 0), (n, t)).into_owned();
        let gamma_t = gamma.view(((t - 1) * n, 0), (n, n)).into_owned();

        // Gradient Lipschitz bound: quadratic part plus worst-case hinge
        // curvature of the state and terminal penalties.
        let eig_max = |m: &DMatrix<f64>| -> f64 {
            m.clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(0.0, f64::max)
        };
        let mut lipschitz = eig_max(&h);
        let w_state = config.effective_state_weight();
        if w_state > 0.0 {
            lipschitz += 2.0 * w_state * eig_max(&(theta_u.transpose() * &theta_u));
            if config.theta_dot_min_deg_s.is_some() || config.theta_dot_max_deg_s.is_some() {
                lipschitz += 2.0 * w_state * eig_max(&(vel_u.transpose() * &vel_u));
            }
        }
        if config.terminal_penalty_weight > 0.0 {
            let pt_s_p = phi_t.transpose() * &s_terminal * &phi_t;
            lipschitz += 2.0 * config.terminal_penalty_weight * eig_max(&pt_s_p);
        }
        if !lipschitz.is_finite() || lipschitz <= 0.0 {
            return Err(Error::Numerics(
                "condensed problem has a degenerate curvature bound".into(),
            ));
        }

        Ok(HorizonDynamics {
            sigma: sigma.to_vec(),
            gamma,
            phi,
            h,
            c: matrices.c.clone(),
            theta_u,
            theta_x,
            vel_u,
            vel_x,
            phi_t,
            gamma_t,
            s_terminal,
            terminal_phase,
            q_blocks,
            lipschitz,
        })
    }

    pub fn horizon(&self) -> usize {
        self.sigma.len()
    }

    pub fn dim(&self) -> usize {
        self.gamma.ncols()
    }

    /// Check that every row block was condensed with the operator matching
    /// its σ tag. Returns the largest reconstruction defect.
    pub fn selection_defect(&self, matrices: &PredictionMatrices) -> f64 {
        let n = self.dim();
        let t = self.horizon();
        let mut worst = 0.0f64;
        let mut prev_gamma = DMatrix::identity(n, n);
        for j in 0..t {
            let a = matrices.a(self.sigma[j]);
            let b = matrices.b(self.sigma[j]);
            let gamma_j = self.gamma.view((j * n, 0), (n, n)).into_owned();
            worst = worst.max((&gamma_j - a * &prev_gamma).norm());
            let b_j = self.phi.view((j * n, j), (n, 1)).into_owned();
            worst = worst.max((&b_j - b).norm());
            prev_gamma = gamma_j;
        }
        worst
    }
}

/// One concrete QP instance: pattern matrices plus the data that depends
/// on the current state and reference window.
#[derive(Clone, Debug)]
pub struct HorizonProblem {
    pub dynamics: Arc<HorizonDynamics>,
    /// Current predictor state.
    pub psi0: DVector<f64>,
    /// Linear coefficient (includes the factor two).
    pub f: DVector<f64>,
    /// State-independent cost offset so the reported objective is the
    /// true horizon cost.
    pub cost_offset: f64,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    /// Free-response part of the predicted angle per step.
    pub theta_offset: DVector<f64>,
    /// Free-response part of the predicted physical velocity per step
    /// (reference velocity added back).
    pub vel_offset: DVector<f64>,
    /// Free response at the terminal step.
    pub terminal_free: DVector<f64>,
    pub limits: StateLimits,
}

/// Box limits and penalty weights carried into the solver.
#[derive(Clone, Copy, Debug)]
pub struct StateLimits {
    pub theta_min: f64,
    pub theta_max: f64,
    pub vel_min: Option<f64>,
    pub vel_max: Option<f64>,
    pub state_weight: f64,
    pub terminal_eps: f64,
    pub terminal_weight: f64,
}

/// Assemble the QP for the current state.
///
/// `psi0` is the current (lifted or projected) state; `sigma` the phase
/// schedule over the horizon; `ref_velocity[j]` the reference velocity at
/// predicted step `j+1`, used to express the physical-velocity box.
pub fn build_horizon_problem(
    dynamics: Arc<HorizonDynamics>,
    config: &MpcConfig,
    psi0: &DVector<f64>,
    ref_velocity: &[f64],
) -> Result<HorizonProblem> {
    let t = dynamics.horizon();
    let n = dynamics.dim();
    if psi0.len() != n {
        return Err(Error::Config(format!(
            "initial state has dimension {}, predictor expects {n}",
            psi0.len()
        )));
    }
    if ref_velocity.len() != t {
        return Err(Error::Config(format!(
            "reference velocity window must hold {t} entries, got {}",
            ref_velocity.len()
        )));
    }
    // Free response and the linear cost term f = 2 Φᵀ Q̂ Γψ₀.
    let free = &dynamics.gamma * psi0;
    let mut weighted_free = DVector::zeros(t * n);
    let mut cost_offset = 0.0;
    for j in 0..t {
        let block = free.rows(j * n, n);
        let wf = &dynamics.q_blocks[j] * block;
        cost_offset += block.dot(&wf);
        weighted_free.rows_mut(j * n, n).copy_from(&wf);
    }
    let f = 2.0 * dynamics.phi.transpose() * weighted_free;

    let mut lb = DVector::zeros(t);
    let mut ub = DVector::zeros(t);
    for j in 0..t {
        let b = config.bounds(dynamics.sigma[j]);
        lb[j] = b.min_ma;
        ub[j] = b.max_ma;
    }

    let theta_offset = &dynamics.theta_x * psi0;
    let mut vel_offset = &dynamics.vel_x * psi0;
    for j in 0..t {
        vel_offset[j] += ref_velocity[j];
    }
    let terminal_free = &dynamics.gamma_t * psi0;

    Ok(HorizonProblem {
        dynamics,
        psi0: psi0.clone(),
        f,
        cost_offset,
        lb,
        ub,
        theta_offset,
        vel_offset,
        terminal_free,
        limits: StateLimits {
            theta_min: config.theta_min_deg,
            theta_max: config.theta_max_deg,
            vel_min: config.theta_dot_min_deg_s,
            vel_max: config.theta_dot_max_deg_s,
            state_weight: config.effective_state_weight(),
            terminal_eps: config.terminal_eps,
            terminal_weight: config.terminal_penalty_weight,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::{DictionaryKind, FitDiagnostics, ObservableDictionary, PhaseOperators};

    fn toy_model(a_st: f64, a_sw: f64) -> KoopmanModel {
        let dict = ObservableDictionary::new(DictionaryKind::State, 1).unwrap();
        let diag = FitDiagnostics {
            residual: 0.0,
            cond_g: 1.0,
            pair_count: 10,
            rank_deficient: false,
        };
        let ops = |a: f64| PhaseOperators {
            k_xx: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[a, a, 1.0])),
            k_xu: DMatrix::from_column_slice(3, 1, &[0.1, 0.2, 0.0]),
            diagnostics: diag.clone(),
        };
        let mut recovery = DMatrix::zeros(3, 3);
        recovery.fill_with_identity();
        KoopmanModel {
            dictionary: dict,
            stance: ops(a_st),
            swing: ops(a_sw),
            recovery,
            projection_residual: 0.0,
            training_config_hash: String::new(),
        }
    }

    #[test]
    fn single_phase_condensation_matches_brute_force() {
        let model = toy_model(0.9, 0.7);
        let config = MpcConfig::default();
        let m = PredictionMatrices::from_model(&model, PredictionSpace::Lifted).unwrap();
        let (s_st, s_sw) = terminal_weights(&m, &config).unwrap();
        let sigma = vec![Phase::Stance; 5];
        let dynamics = HorizonDynamics::build(&m, &config, &s_st, &s_sw, &sigma).unwrap();
        // Brute force: psi_j by explicit matrix powers.
        let a = m.a(Phase::Stance);
        let b = m.b(Phase::Stance);
        let n = 3;
        for j in 0..5 {
            let mut expect_gamma = DMatrix::identity(n, n);
            for _ in 0..=j {
                expect_gamma = a * expect_gamma;
            }
            let got = dynamics.gamma.view((j * n, 0), (n, n));
            assert!((got - &expect_gamma).norm() < 1e-12);
            // Column i of phi block j: A^(j-i) B.
            for i in 0..=j {
                let mut expect = b.clone();
                for _ in 0..j - i {
                    expect = a * expect;
                }
                let got = dynamics.phi.view((j * n, i), (n, 1));
                assert!((got - expect).norm() < 1e-12);
            }
        }
        assert!(dynamics.selection_defect(&m) < 1e-12);
    }

    #[test]
    fn switching_horizon_selects_per_row_operators() {
        let model = toy_model(0.9, 0.4);
        let config = MpcConfig::default();
        let m = PredictionMatrices::from_model(&model, PredictionSpace::Lifted).unwrap();
        let (s_st, s_sw) = terminal_weights(&m, &config).unwrap();
        let sigma = vec![
            Phase::Stance,
            Phase::Stance,
            Phase::Swing,
            Phase::Swing,
            Phase::Swing,
        ];
        let dynamics = HorizonDynamics::build(&m, &config, &s_st, &s_sw, &sigma).unwrap();
        assert!(dynamics.selection_defect(&m) < 1e-12);
        assert_eq!(dynamics.terminal_phase, Phase::Swing);
        // Wrong tags must be detected.
        let mut tampered = dynamics.clone();
        tampered.sigma[2] = Phase::Stance;
        assert!(tampered.selection_defect(&m) > 1e-6);
    }

    #[test]
    fn identical_phase_operators_give_equal_terminal_weights() {
        let model = toy_model(0.8, 0.8);
        let config = MpcConfig::default();
        let m = PredictionMatrices::from_model(&model, PredictionSpace::Lifted).unwrap();
        let (s_st, s_sw) = terminal_weights(&m, &config).unwrap();
        assert!((s_st - s_sw).norm() < 1e-12);
    }

    #[test]
    fn embedding_models_are_rejected() {
        let dict = ObservableDictionary::new(DictionaryKind::State, 2).unwrap();
        let diag = FitDiagnostics {
            residual: 0.0,
            cond_g: 1.0,
            pair_count: 10,
            rank_deficient: false,
        };
        let ops = PhaseOperators {
            k_xx: DMatrix::identity(6, 6),
            k_xu: DMatrix::zeros(6, 2),
            diagnostics: diag,
        };
        let model = KoopmanModel {
            dictionary: dict,
            stance: ops.clone(),
            swing: ops,
            recovery: DMatrix::zeros(3, 6),
            projection_residual: 0.0,
            training_config_hash: String::new(),
        };
        assert!(PredictionMatrices::from_model(&model, PredictionSpace::Lifted).is_err());
    }
}

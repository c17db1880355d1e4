//! Receding-horizon controller and closed-loop execution.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DVector, Vector3};

use super::condense::{
    build_horizon_problem, terminal_weights, HorizonDynamics, PredictionMatrices,
};
use super::config::{MpcConfig, PredictionSpace};
use super::solver::{solve_horizon, MpcSolution};
use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;
use crate::plant::{
    augment_state, plant_step, AnkleState, GaitPhaseSchedule, Phase, PlantParams, ReferenceParams,
};

/// Stateful receding-horizon controller. One instance drives one loop;
/// the warm-start buffer and condensation cache are controller-local.
pub struct MpcController {
    matrices: PredictionMatrices,
    config: MpcConfig,
    s_stance: nalgebra::DMatrix<f64>,
    s_swing: nalgebra::DMatrix<f64>,
    dictionary: crate::koopman::ObservableDictionary,
    cache: HashMap<Vec<u8>, Arc<HorizonDynamics>>,
    warm: Option<DVector<f64>>,
}

/// Outcome of one control step.
#[derive(Clone, Debug)]
pub struct MpcStep {
    /// Stimulation to apply now (first input of the optimal sequence).
    pub u: f64,
    pub solution: MpcSolution,
}

impl MpcController {
    /// Build a controller for a fitted model, checking the dictionary
    /// against the configuration and solving both terminal Riccati
    /// equations up front.
    pub fn new(model: &KoopmanModel, config: MpcConfig) -> Result<Self> {
        config.validate()?;
        if model.dictionary.kind.name() != config.expected_dictionary {
            return Err(Error::Config(format!(
                "model dictionary {:?} disagrees with controller config {:?}",
                model.dictionary.kind.name(),
                config.expected_dictionary
            )));
        }
        let matrices = PredictionMatrices::from_model(model, config.prediction_space)?;
        let (s_stance, s_swing) = terminal_weights(&matrices, &config)?;
        Ok(MpcController {
            matrices,
            config,
            s_stance,
            s_swing,
            dictionary: model.dictionary,
            cache: HashMap::new(),
            warm: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Phase-selected terminal weights (stance, swing).
    pub fn terminal_s(&self) -> (&nalgebra::DMatrix<f64>, &nalgebra::DMatrix<f64>) {
        (&self.s_stance, &self.s_swing)
    }

    /// Forget the warm start (e.g. between runs).
    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Current predictor state from a measurement.
    pub fn lift_measurement(&self, z: &Vector3<f64>) -> DVector<f64> {
        match self.config.prediction_space {
            PredictionSpace::Lifted => self.dictionary.lift_state_window(&[*z]),
            PredictionSpace::Projected => DVector::from_column_slice(z.as_slice()),
        }
    }

    fn dynamics_for(&mut self, sigma: &[Phase]) -> Result<Arc<HorizonDynamics>> {
        let key: Vec<u8> = sigma.iter().map(|p| p.indicator()).collect();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let built = Arc::new(HorizonDynamics::build(
            &self.matrices,
            &self.config,
            &self.s_stance,
            &self.s_swing,
            sigma,
        )?);
        self.cache.insert(key, built.clone());
        Ok(built)
    }

    /// Solve the horizon problem for an explicit phase schedule and
    /// reference-velocity window, apply the receding-horizon rule, and
    /// retain the shifted sequence as the next warm start.
    pub fn step_with_schedule(
        &mut self,
        z: &Vector3<f64>,
        sigma: &[Phase],
        ref_velocity: &[f64],
    ) -> Result<MpcStep> {
        if sigma.len() != self.config.horizon_steps {
            return Err(Error::Config(format!(
                "phase schedule must cover {} steps, got {}",
                self.config.horizon_steps,
                sigma.len()
            )));
        }
        let dynamics = self.dynamics_for(sigma)?;
        let psi0 = self.lift_measurement(z);
        let problem = build_horizon_problem(dynamics, &self.config, &psi0, ref_velocity)?;
        let solution = solve_horizon(&problem, self.warm.as_ref(), &self.config.solver);
        // Shift for the next step; the final entry repeats.
        let t = solution.inputs.len();
        let mut shifted = DVector::zeros(t);
        for j in 0..t - 1 {
            shifted[j] = solution.inputs[j + 1];
        }
        shifted[t - 1] = solution.inputs[t - 1];
        self.warm = Some(shifted);
        Ok(MpcStep {
            u: solution.inputs[0],
            solution,
        })
    }

    /// One control step at wall time `t`: derives the phase schedule over
    /// the horizon and the reference-velocity window, then solves.
    pub fn step(
        &mut self,
        z: &Vector3<f64>,
        t: f64,
        schedule: &GaitPhaseSchedule,
        reference: &ReferenceParams,
    ) -> Result<MpcStep> {
        let horizon = self.config.horizon_steps;
        let dt = self.config.sample_period_s;
        let sigma: Vec<Phase> = (0..horizon)
            .map(|j| schedule.phase_at(t + j as f64 * dt))
            .collect();
        let ref_velocity: Vec<f64> = (1..=horizon)
            .map(|j| reference.sample(schedule, t + j as f64 * dt).1)
            .collect();
        self.step_with_schedule(z, &sigma, &ref_velocity)
    }
}

/// One logged sample of a closed-loop run.
#[derive(Clone, Copy, Debug)]
pub struct RunRow {
    pub t: f64,
    pub theta: f64,
    pub theta_d: f64,
    pub theta_dot: f64,
    pub theta_dot_d: f64,
    pub u: f64,
    pub sigma: u8,
    pub cost: f64,
    pub solve_ms: f64,
    pub converged: bool,
}

/// Full closed-loop log plus the data needed to summarize it.
#[derive(Clone, Debug)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
    pub sample_period_s: f64,
    pub cycle_period_s: f64,
}

/// Run the controller against the nonlinear plant at the control rate.
pub fn closed_loop_run(
    plant: &PlantParams,
    controller: &mut MpcController,
    schedule: &GaitPhaseSchedule,
    reference: &ReferenceParams,
    initial: AnkleState,
    duration_s: f64,
) -> Result<RunLog> {
    plant.validate()?;
    schedule.validate()?;
    reference.validate()?;
    if duration_s <= 0.0 {
        return Err(Error::Config("run duration must be positive".into()));
    }
    let dt = controller.config.sample_period_s;
    let steps = (duration_s / dt).round() as usize;
    let mut rows = Vec::with_capacity(steps);
    let mut state = initial;
    let mut activation = 0.0;
    controller.reset();
    for _ in 0..steps {
        let (theta_d, theta_dot_d) = reference.sample(schedule, state.t);
        let z = augment_state(&state, theta_d, theta_dot_d);
        let phase = schedule.phase_at(state.t);
        let step = controller
            .step(&z, state.t, schedule, reference)
            .map_err(|e| Error::Numerics(format!("t = {:.3} s: {e}", state.t)))?;
        rows.push(RunRow {
            t: state.t,
            theta: state.theta,
            theta_d,
            theta_dot: state.theta_dot,
            theta_dot_d,
            u: step.u,
            sigma: phase.indicator(),
            cost: step.solution.cost,
            solve_ms: step.solution.solve_ms,
            converged: step.solution.converged,
        });
        let (next, next_activation) = plant_step(&state, activation, step.u, phase, dt, plant)
            .map_err(|e| Error::Numerics(format!("t = {:.3} s: {e}", state.t)))?;
        state = next;
        activation = next_activation;
    }
    Ok(RunLog {
        rows,
        sample_period_s: dt,
        cycle_period_s: schedule.cycle_period_s(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::{DictionaryKind, FitDiagnostics, ObservableDictionary, PhaseOperators};
    use crate::mpc::config::InputBounds;
    use crate::mpc::dare::{lqr_gain, solve_dare};
    use nalgebra::DMatrix;

    fn linear_model(a: DMatrix<f64>, b: DMatrix<f64>) -> KoopmanModel {
        let dict = ObservableDictionary::new(DictionaryKind::State, 1).unwrap();
        let diag = FitDiagnostics {
            residual: 0.0,
            cond_g: 1.0,
            pair_count: 10,
            rank_deficient: false,
        };
        let ops = PhaseOperators {
            k_xx: a,
            k_xu: b,
            diagnostics: diag,
        };
        KoopmanModel {
            dictionary: dict,
            stance: ops.clone(),
            swing: ops,
            recovery: DMatrix::identity(3, 3),
            projection_residual: 0.0,
            training_config_hash: String::new(),
        }
    }

    fn unconstrained_config() -> MpcConfig {
        MpcConfig {
            stance_bounds: InputBounds {
                min_ma: -1e9,
                max_ma: 1e9,
            },
            swing_bounds: InputBounds {
                min_ma: -1e9,
                max_ma: 1e9,
            },
            state_penalty_weight: 0.0,
            terminal_penalty_weight: 0.0,
            solver: crate::mpc::config::SolverSettings {
                max_iter: 50_000,
                grad_tol: 1e-11,
            },
            expected_dictionary: "state".into(),
            ..MpcConfig::default()
        }
    }

    /// With terminal Riccati weights and no active constraints, the
    /// receding-horizon law reproduces infinite-horizon feedback.
    #[test]
    fn matches_lqr_on_perfect_model() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.96, 0.04, 0.0, -0.05, 0.92, 0.0, 0.0, 0.0, 0.9],
        );
        let b = DMatrix::from_column_slice(3, 1, &[0.01, 0.25, 0.0]);
        let model = linear_model(a.clone(), b.clone());
        let config = unconstrained_config();
        let mut controller = MpcController::new(&model, config.clone()).unwrap();

        let q = PredictionMatrices::from_model(&model, PredictionSpace::Lifted)
            .unwrap()
            .lifted_q(&config);
        let r = DMatrix::from_element(1, 1, config.r_stance);
        let s = solve_dare(&a, &b, &q, &r, &config.dare).unwrap();
        let k = lqr_gain(&a, &b, &r, &s).unwrap();

        let sigma = vec![Phase::Stance; config.horizon_steps];
        let refv = vec![0.0; config.horizon_steps];
        let mut z = Vector3::new(5.0, -3.0, 0.0);
        for _ in 0..50 {
            let step = controller.step_with_schedule(&z, &sigma, &refv).unwrap();
            let zvec = DVector::from_column_slice(z.as_slice());
            let u_lqr = -(&k * &zvec)[0];
            assert!(
                (step.u - u_lqr).abs() < 1e-6,
                "mpc {} vs lqr {u_lqr}",
                step.u
            );
            let znext = &a * zvec + &b * DVector::from_element(1, step.u);
            z = Vector3::new(znext[0], znext[1], znext[2]);
        }
    }

    /// Nominal regulation on the exact model drives the error to zero.
    #[test]
    fn perfect_model_regulates_to_origin() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.98, 0.02, 0.0, -0.03, 0.95, 0.0, 0.0, 0.0, 1.0],
        );
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 0.2, 0.0]);
        let model = linear_model(a.clone(), b.clone());
        let config = unconstrained_config();
        let mut controller = MpcController::new(&model, config.clone()).unwrap();
        let sigma = vec![Phase::Stance; config.horizon_steps];
        let refv = vec![0.0; config.horizon_steps];
        let mut z = Vector3::new(8.0, 0.0, 2.0);
        for _ in 0..400 {
            let step = controller.step_with_schedule(&z, &sigma, &refv).unwrap();
            let zvec = DVector::from_column_slice(z.as_slice());
            let znext = &a * zvec + &b * DVector::from_element(1, step.u);
            z = Vector3::new(znext[0], znext[1], znext[2]);
        }
        assert!(z[0].abs() < 1e-6 && z[1].abs() < 1e-6, "z = {z:?}");
    }

    #[test]
    fn dictionary_mismatch_is_rejected() {
        let model = linear_model(DMatrix::identity(3, 3), DMatrix::zeros(3, 1));
        let config = MpcConfig {
            expected_dictionary: "custom".into(),
            ..MpcConfig::default()
        };
        assert!(MpcController::new(&model, config).is_err());
    }

    #[test]
    fn terminal_decrease_along_nominal_run() {
        // Stabilizable pair; V(psi_{k+1}) <= V(psi_k) - l(...) holds under
        // the Riccati terminal weight when constraints stay inactive.
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[0.97, 0.05, 0.0, -0.04, 0.9, 0.0, 0.0, 0.0, 0.9],
        );
        let b = DMatrix::from_column_slice(3, 1, &[0.02, 0.3, 0.0]);
        let model = linear_model(a.clone(), b.clone());
        let config = unconstrained_config();
        let mut controller = MpcController::new(&model, config.clone()).unwrap();
        let matrices = PredictionMatrices::from_model(&model, PredictionSpace::Lifted).unwrap();
        let q_bar = matrices.lifted_q(&config);
        let (s, _) = {
            let (s_st, s_sw) = terminal_weights(&matrices, &config).unwrap();
            (s_st, s_sw)
        };
        let sigma = vec![Phase::Stance; config.horizon_steps];
        let refv = vec![0.0; config.horizon_steps];
        let mut z = Vector3::new(4.0, -1.0, 0.0);
        let value = |z: &Vector3<f64>| {
            let v = DVector::from_column_slice(z.as_slice());
            v.dot(&(&s * &v))
        };
        for _ in 0..100 {
            let step = controller.step_with_schedule(&z, &sigma, &refv).unwrap();
            let zvec = DVector::from_column_slice(z.as_slice());
            let znext = &a * &zvec + &b * DVector::from_element(1, step.u);
            let stage = zvec.dot(&(&q_bar * &zvec)) + config.r_stance * step.u * step.u;
            let znext3 = Vector3::new(znext[0], znext[1], znext[2]);
            assert!(
                value(&znext3) <= value(&z) - stage + 1e-9,
                "terminal decrease violated"
            );
            z = znext3;
        }
    }
}

//! Projected-gradient solver for the condensed horizon QP.

use nalgebra::{DVector, Vector3};

use super::condense::HorizonProblem;
use super::config::SolverSettings;

/// Solution of one horizon problem.
#[derive(Clone, Debug)]
pub struct MpcSolution {
    /// Optimal stimulation sequence (mA), already inside the phase boxes.
    pub inputs: Vec<f64>,
    /// Predicted projected states over the horizon.
    pub predicted_z: Vec<Vector3<f64>>,
    /// Achieved objective value, penalties included.
    pub cost: f64,
    pub iterations: usize,
    /// Projected-gradient norm at termination.
    pub grad_norm: f64,
    /// Whether the terminal state satisfied `ψᵀSψ ≤ ε`.
    pub terminal_set_ok: bool,
    pub converged: bool,
    /// Wall-clock solve time in milliseconds.
    pub solve_ms: f64,
}

fn project(u: &mut DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) {
    for i in 0..u.len() {
        u[i] = u[i].clamp(lb[i], ub[i]);
    }
}

/// Objective value and gradient: quadratic cost plus state-box and
/// terminal-set hinge penalties.
fn cost_and_grad(problem: &HorizonProblem, u: &DVector<f64>) -> (f64, DVector<f64>) {
    let dynamics = &problem.dynamics;
    let t = dynamics.horizon();
    let hu = &dynamics.h * u;
    let mut grad = &hu + &problem.f;
    let mut cost = problem.cost_offset + 0.5 * u.dot(&hu) + problem.f.dot(u);

    let lim = &problem.limits;
    if lim.state_weight > 0.0 {
        let theta = &problem.theta_offset + &dynamics.theta_u * u;
        for j in 0..t {
            let over = (theta[j] - lim.theta_max).max(0.0);
            let under = (lim.theta_min - theta[j]).max(0.0);
            if over > 0.0 || under > 0.0 {
                let active = over - under;
                cost += lim.state_weight * active * active;
                grad += dynamics.theta_u.row(j).transpose() * (2.0 * lim.state_weight * active);
            }
        }
        if lim.vel_min.is_some() || lim.vel_max.is_some() {
            let vel = &problem.vel_offset + &dynamics.vel_u * u;
            for j in 0..t {
                let over = lim.vel_max.map_or(0.0, |hi| (vel[j] - hi).max(0.0));
                let under = lim.vel_min.map_or(0.0, |lo| (lo - vel[j]).max(0.0));
                if over > 0.0 || under > 0.0 {
                    let active = over - under;
                    cost += lim.state_weight * active * active;
                    grad += dynamics.vel_u.row(j).transpose() * (2.0 * lim.state_weight * active);
                }
            }
        }
    }
    if lim.terminal_weight > 0.0 {
        // Squared distance to the terminal ellipsoid in the S-metric:
        // smooth at the boundary and globally 2μ·λmax(ΦᵀSΦ)-smooth in U.
        let psi_t = &problem.terminal_free + &dynamics.phi_t * u;
        let s_psi = &dynamics.s_terminal * &psi_t;
        let quad = psi_t.dot(&s_psi);
        if quad > lim.terminal_eps {
            let excess = quad.sqrt() - lim.terminal_eps.sqrt();
            cost += lim.terminal_weight * excess * excess;
            let scale = 2.0 * lim.terminal_weight * (1.0 - (lim.terminal_eps / quad).sqrt());
            grad += dynamics.phi_t.transpose() * s_psi * scale;
        }
    }
    (cost, grad)
}

/// Solve the box-constrained QP by projected gradient descent.
///
/// Steps use the Barzilai-Borwein length clamped from below by `1/L`
/// (`L` is the cached curvature bound); a candidate that fails to
/// decrease the objective is rejected and retried with the safe `1/L`
/// step, so the cost is non-increasing across accepted iterates.
/// Termination is on the norm of the projected gradient at the safe
/// step scale.
pub fn solve_horizon(
    problem: &HorizonProblem,
    warm_start: Option<&DVector<f64>>,
    settings: &SolverSettings,
) -> MpcSolution {
    let start = std::time::Instant::now();
    let t = problem.dynamics.horizon();
    let safe_step = 1.0 / problem.dynamics.lipschitz;

    let mut u = match warm_start {
        Some(w) if w.len() == t => w.clone(),
        _ => DVector::from_fn(t, |j, _| 0.5 * (problem.lb[j] + problem.ub[j])),
    };
    project(&mut u, &problem.lb, &problem.ub);

    let (mut cost, mut grad) = cost_and_grad(problem, &u);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    while iterations < settings.max_iter {
        iterations += 1;
        // Optimality measure at the safe step scale.
        let mut safe_candidate = &u - &grad * safe_step;
        project(&mut safe_candidate, &problem.lb, &problem.ub);
        grad_norm = (&safe_candidate - &u).norm() / safe_step;
        if grad_norm <= settings.grad_tol {
            converged = true;
            break;
        }
        // Spectral (Barzilai-Borwein) step, clamped to stay sane.
        let step = match &prev {
            Some((u_prev, g_prev)) => {
                let s = &u - u_prev;
                let y = &grad - g_prev;
                let sy = s.dot(&y);
                if sy > 0.0 {
                    (s.dot(&s) / sy).clamp(safe_step, 1e8 * safe_step)
                } else {
                    safe_step
                }
            }
            None => safe_step,
        };
        let mut candidate = &u - &grad * step;
        project(&mut candidate, &problem.lb, &problem.ub);
        let (mut next_cost, mut next_grad) = cost_and_grad(problem, &candidate);
        if next_cost > cost && step > safe_step {
            // Reject the spectral step; the 1/L step always descends.
            candidate = safe_candidate;
            let refreshed = cost_and_grad(problem, &candidate);
            next_cost = refreshed.0;
            next_grad = refreshed.1;
        }
        debug_assert!(
            next_cost <= cost + 1e-9 * cost.abs().max(1.0),
            "projected gradient step increased the cost: {cost} -> {next_cost}"
        );
        prev = Some((u.clone(), grad.clone()));
        u = candidate;
        cost = next_cost;
        grad = next_grad;
    }

    // Predicted trajectory and terminal-set check at the returned point.
    let dynamics = &problem.dynamics;
    let predicted_z = predicted_states(problem, &u);
    let psi_t = &problem.terminal_free + &dynamics.phi_t * &u;
    let terminal_quad = psi_t.dot(&(&dynamics.s_terminal * &psi_t));

    MpcSolution {
        inputs: u.iter().cloned().collect(),
        predicted_z,
        cost,
        iterations,
        grad_norm,
        terminal_set_ok: terminal_quad <= problem.limits.terminal_eps,
        converged,
        solve_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Projected predictions `z_j = C ψ_j` for a candidate input sequence.
pub fn predicted_states(problem: &HorizonProblem, u: &DVector<f64>) -> Vec<Vector3<f64>> {
    let dynamics = &problem.dynamics;
    let t = dynamics.horizon();
    let n = dynamics.dim();
    let stacked = &dynamics.gamma * &problem.psi0 + &dynamics.phi * u;
    let mut out = Vec::with_capacity(t);
    for j in 0..t {
        let z = &dynamics.c * stacked.rows(j * n, n);
        out.push(Vector3::new(z[0], z[1], z[2]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::{DictionaryKind, FitDiagnostics, ObservableDictionary, PhaseOperators};
    use crate::mpc::condense::{
        build_horizon_problem, terminal_weights, HorizonDynamics, PredictionMatrices,
    };
    use crate::mpc::config::{InputBounds, MpcConfig, PredictionSpace};
    use crate::plant::Phase;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn linear_model() -> crate::koopman::KoopmanModel {
        let dict = ObservableDictionary::new(DictionaryKind::State, 1).unwrap();
        let diag = FitDiagnostics {
            residual: 0.0,
            cond_g: 1.0,
            pair_count: 10,
            rank_deficient: false,
        };
        let ops = PhaseOperators {
            k_xx: DMatrix::from_row_slice(
                3,
                3,
                &[0.95, 0.08, 0.0, -0.06, 0.9, 0.0, 0.0, 0.0, 0.99],
            ),
            k_xu: DMatrix::from_column_slice(3, 1, &[0.02, 0.3, 0.0]),
            diagnostics: diag,
        };
        crate::koopman::KoopmanModel {
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
                max_iter: 20_000,
                grad_tol: 1e-12,
            },
            ..MpcConfig::default()
        }
    }

    fn problem_for(
        config: &MpcConfig,
        psi0: &DVector<f64>,
    ) -> (HorizonProblem, PredictionMatrices) {
        let model = linear_model();
        let m = PredictionMatrices::from_model(&model, PredictionSpace::Lifted).unwrap();
        let (s_st, s_sw) = terminal_weights(&m, config).unwrap();
        let sigma = vec![Phase::Stance; config.horizon_steps];
        let dynamics =
            Arc::new(HorizonDynamics::build(&m, config, &s_st, &s_sw, &sigma).unwrap());
        let refv = vec![0.0; config.horizon_steps];
        (
            build_horizon_problem(dynamics, config, psi0, &refv).unwrap(),
            m,
        )
    }

    /// Unconstrained solve matches the dense closed-form minimizer.
    #[test]
    fn matches_dense_solution_without_constraints() {
        let config = unconstrained_config();
        let psi0 = DVector::from_column_slice(&[4.0, -2.0, 1.0]);
        let (problem, _) = problem_for(&config, &psi0);
        let solution = solve_horizon(&problem, None, &config.solver);
        assert!(solution.converged);
        let dense = problem
            .dynamics
            .h
            .clone()
            .cholesky()
            .expect("H positive definite")
            .solve(&(-&problem.f));
        for (got, want) in solution.inputs.iter().zip(dense.iter()) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn saturates_exactly_at_the_upper_bound() {
        let mut config = unconstrained_config();
        config.stance_bounds = InputBounds {
            min_ma: 0.0,
            max_ma: 1.0,
        };
        config.swing_bounds = config.stance_bounds;
        let psi0 = DVector::from_column_slice(&[-50.0, 0.0, 0.0]);
        let (problem, _) = problem_for(&config, &psi0);
        let solution = solve_horizon(&problem, None, &config.solver);
        // Driving a large negative error demands a large positive input.
        assert!((solution.inputs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_zero_reference_costs_nothing() {
        let mut config = unconstrained_config();
        config.stance_bounds = InputBounds {
            min_ma: -10.0,
            max_ma: 10.0,
        };
        config.swing_bounds = config.stance_bounds;
        let psi0 = DVector::zeros(3);
        let (problem, _) = problem_for(&config, &psi0);
        let solution = solve_horizon(&problem, None, &config.solver);
        assert!(solution.cost.abs() < 1e-12);
        assert!(solution.inputs.iter().all(|u| u.abs() < 1e-9));
    }

    #[test]
    fn warm_start_cuts_iterations() {
        let config = unconstrained_config();
        let psi0 = DVector::from_column_slice(&[4.0, -2.0, 1.0]);
        let (problem, _) = problem_for(&config, &psi0);
        let cold = solve_horizon(&problem, None, &config.solver);
        let warm = DVector::from_column_slice(&cold.inputs);
        let warmed = solve_horizon(&problem, Some(&warm), &config.solver);
        assert!(warmed.iterations <= cold.iterations);
    }

    #[test]
    fn projection_is_idempotent() {
        let lb = DVector::from_column_slice(&[0.0, 0.0]);
        let ub = DVector::from_column_slice(&[1.0, 2.0]);
        let mut u = DVector::from_column_slice(&[-5.0, 3.0]);
        project(&mut u, &lb, &ub);
        let once = u.clone();
        project(&mut u, &lb, &ub);
        assert_eq!(u, once);
        assert_eq!(u.as_slice(), &[0.0, 2.0]);
    }
}

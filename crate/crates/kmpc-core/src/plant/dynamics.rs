//! Switched nonlinear ankle dynamics under electrical stimulation.
//!
//! The joint obeys `J^ζ θ̈ + f(θ, θ̇) = τ^ζ(θ, θ̇, a)` where ζ selects the
//! stance (plantarflexor) or swing (dorsiflexor) channel. The passive field
//! `f` collects viscous, elastic, and gravitational torques; the active
//! torque scales a first-order muscle activation `a` by Hill-type
//! torque-angle and torque-velocity factors. External units are degrees,
//! deg/s, and mA throughout; inertia is kept in SI (kg·m²) and converted
//! internally.

use serde::{Deserialize, Serialize};

use super::schedule::Phase;
use crate::error::{Error, Result};

const DEG_TO_RAD: f64 = std::f64::consts::PI / 180.0;
const RAD_TO_DEG: f64 = 180.0 / std::f64::consts::PI;

/// Ankle pitch state at a time instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnkleState {
    /// Joint angle (degrees). Positive is dorsiflexion.
    pub theta: f64,
    /// Joint angular velocity (degrees/second).
    pub theta_dot: f64,
    /// Gait-clock time (seconds).
    pub t: f64,
}

impl AnkleState {
    pub fn new(theta: f64, theta_dot: f64, t: f64) -> Self {
        AnkleState { theta, theta_dot, t }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.theta_dot.is_finite() && self.t.is_finite()
    }
}

/// Per-phase plant parameters. Both the actuation channel and the
/// passive elastic field switch with the gait phase: in stance the joint
/// is loaded and rests dorsiflexed, in swing the foot hangs toward
/// plantarflexion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Inertia about the ankle pitch axis (kg·m²).
    pub inertia_kg_m2: f64,
    /// Torque produced per mA of stimulation at full activation (N·m/mA).
    /// Negative for the plantarflexor channel (drives the foot down).
    pub input_gain_nm_per_ma: f64,
    /// Passive elastic stiffness (N·m/deg).
    pub stiffness_nm_per_deg: f64,
    /// Elastic rest angle (degrees).
    pub rest_angle_deg: f64,
}

/// Physical parameters of the switched ankle plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub stance: PhaseParams,
    pub swing: PhaseParams,
    /// Musculoskeletal viscosity (N·m per deg/s).
    pub viscosity_nm_s_per_deg: f64,
    /// Gravitational torque amplitude (N·m); enters as `g_c·sin(θ)`.
    pub gravity_torque_nm: f64,
    /// Center of the Gaussian torque-angle curve (degrees).
    pub torque_angle_center_deg: f64,
    /// Width of the Gaussian torque-angle curve (degrees).
    pub torque_angle_width_deg: f64,
    /// Torque-velocity droop per deg/s of speed.
    pub torque_velocity_slope_per_deg_s: f64,
    /// Lower clamp of the torque-velocity factor, in (0, 1].
    pub torque_velocity_floor: f64,
    /// Muscle activation time constant (seconds).
    pub activation_time_constant_s: f64,
}

impl PlantParams {
    pub fn phase(&self, phase: Phase) -> &PhaseParams {
        match phase {
            Phase::Stance => &self.stance,
            Phase::Swing => &self.swing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stance.inertia_kg_m2 > 0.0 && self.swing.inertia_kg_m2 > 0.0) {
            return Err(Error::Config("plant inertia must be positive".into()));
        }
        let finite = [
            self.stance.input_gain_nm_per_ma,
            self.swing.input_gain_nm_per_ma,
            self.stance.stiffness_nm_per_deg,
            self.swing.stiffness_nm_per_deg,
            self.stance.rest_angle_deg,
            self.swing.rest_angle_deg,
            self.viscosity_nm_s_per_deg,
            self.gravity_torque_nm,
            self.torque_angle_center_deg,
            self.torque_angle_width_deg,
            self.torque_velocity_slope_per_deg_s,
            self.torque_velocity_floor,
            self.activation_time_constant_s,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("plant parameters must be finite".into()));
        }
        if self.torque_angle_width_deg <= 0.0 {
            return Err(Error::Config("torque-angle width must be positive".into()));
        }
        if !(self.torque_velocity_floor > 0.0 && self.torque_velocity_floor <= 1.0) {
            return Err(Error::Config(
                "torque-velocity floor must lie in (0, 1]".into(),
            ));
        }
        if self.torque_velocity_slope_per_deg_s < 0.0 {
            return Err(Error::Config(
                "torque-velocity slope must be non-negative".into(),
            ));
        }
        if self.activation_time_constant_s <= 0.0 {
            return Err(Error::Config(
                "activation time constant must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Gaussian torque-angle scaling, in (0, 1].
    pub fn torque_angle_scale(&self, theta: f64) -> f64 {
        let x = (theta - self.torque_angle_center_deg) / self.torque_angle_width_deg;
        (-x * x).exp()
    }

    /// Linear-saturating torque-velocity scaling, in (0, 1].
    pub fn torque_velocity_scale(&self, theta_dot: f64) -> f64 {
        (1.0 - self.torque_velocity_slope_per_deg_s * theta_dot.abs())
            .max(self.torque_velocity_floor)
    }

    /// Passive torque `b·θ̇ + k_e^ζ·(θ − θ₀^ζ) + g_c·sin(θ)` (N·m).
    pub fn passive_torque(&self, theta: f64, theta_dot: f64, phase: Phase) -> f64 {
        let p = self.phase(phase);
        self.viscosity_nm_s_per_deg * theta_dot
            + p.stiffness_nm_per_deg * (theta - p.rest_angle_deg)
            + self.gravity_torque_nm * (theta * DEG_TO_RAD).sin()
    }

    /// Active muscle torque for activation level `a` (N·m).
    pub fn active_torque(&self, theta: f64, theta_dot: f64, activation: f64, phase: Phase) -> f64 {
        self.phase(phase).input_gain_nm_per_ma
            * activation
            * self.torque_angle_scale(theta)
            * self.torque_velocity_scale(theta_dot)
    }
}

/// Mechanical state advanced by RK4.
#[derive(Clone, Copy, Debug, PartialEq)]
struct MechVec {
    theta: f64,
    theta_dot: f64,
}

fn mech_derivative(s: &MechVec, activation: f64, phase: Phase, p: &PlantParams) -> MechVec {
    let tau = p.active_torque(s.theta, s.theta_dot, activation, phase)
        - p.passive_torque(s.theta, s.theta_dot, phase);
    MechVec {
        theta: s.theta_dot,
        theta_dot: tau / p.phase(phase).inertia_kg_m2 * RAD_TO_DEG,
    }
}

fn mech_axpy(s: &MechVec, h: f64, d: &MechVec) -> MechVec {
    MechVec {
        theta: s.theta + h * d.theta,
        theta_dot: s.theta_dot + h * d.theta_dot,
    }
}

/// One fixed-step RK4 step of the phase-selected dynamics under a
/// zero-order-hold input.
///
/// `activation` is the hidden first-order muscle state entering the step.
/// Its filter `ȧ = (u − a)/τ` is linear under the held input, so it is
/// propagated by its closed-form exponential and sampled exactly at the
/// RK4 stage times; only the mechanical states are integrated numerically.
/// Returns the advanced ankle state and activation.
pub fn plant_step(
    state: &AnkleState,
    activation: f64,
    u_ma: f64,
    phase: Phase,
    dt: f64,
    params: &PlantParams,
) -> Result<(AnkleState, f64)> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    if u_ma < 0.0 || !u_ma.is_finite() {
        return Err(Error::Config(format!(
            "stimulation input must be finite and non-negative, got {u_ma}"
        )));
    }
    let tau_act = params.activation_time_constant_s;
    let act_at = |s: f64| u_ma + (activation - u_ma) * (-s / tau_act).exp();
    let a_half = act_at(0.5 * dt);
    let a_end = act_at(dt);

    let s0 = MechVec {
        theta: state.theta,
        theta_dot: state.theta_dot,
    };
    let k1 = mech_derivative(&s0, activation, phase, params);
    let k2 = mech_derivative(&mech_axpy(&s0, 0.5 * dt, &k1), a_half, phase, params);
    let k3 = mech_derivative(&mech_axpy(&s0, 0.5 * dt, &k2), a_half, phase, params);
    let k4 = mech_derivative(&mech_axpy(&s0, dt, &k3), a_end, phase, params);
    let sixth = dt / 6.0;
    let next = AnkleState::new(
        s0.theta + sixth * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
        s0.theta_dot
            + sixth * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot),
        state.t + dt,
    );
    if !next.is_finite() || !a_end.is_finite() {
        return Err(Error::Numerics(format!(
            "integration blew up at t = {:.6} s (theta = {}, theta_dot = {})",
            state.t, next.theta, next.theta_dot
        )));
    }
    Ok((next, a_end))
}

/// Augmented state `z = [e_θ, e_θ̇, θ_d]`: tracking errors plus the desired
/// angle. The desired velocity is carried out-of-band by the reference.
pub fn augment_state(state: &AnkleState, theta_d: f64, theta_dot_d: f64) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(state.theta - theta_d, state.theta_dot - theta_dot_d, theta_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn test_params() -> PlantParams {
        PlantParams {
            stance: PhaseParams {
                inertia_kg_m2: 0.05,
                input_gain_nm_per_ma: -0.12,
                stiffness_nm_per_deg: 0.1,
                rest_angle_deg: 10.0,
            },
            swing: PhaseParams {
                inertia_kg_m2: 0.05,
                input_gain_nm_per_ma: 0.10,
                stiffness_nm_per_deg: 0.06,
                rest_angle_deg: -25.0,
            },
            viscosity_nm_s_per_deg: 0.025,
            gravity_torque_nm: 0.3,
            torque_angle_center_deg: 0.0,
            torque_angle_width_deg: 120.0,
            torque_velocity_slope_per_deg_s: 0.0008,
            torque_velocity_floor: 0.3,
            activation_time_constant_s: 0.01,
        }
    }

    #[test]
    fn equilibrium_at_rest_angle_without_gravity() {
        let mut p = test_params();
        p.gravity_torque_nm = 0.0;
        let s = AnkleState::new(p.stance.rest_angle_deg, 0.0, 0.0);
        let (next, a) = plant_step(&s, 0.0, 0.0, Phase::Stance, 0.005, &p).unwrap();
        assert_relative_eq!(next.theta, s.theta, epsilon = 1e-12);
        assert_relative_eq!(next.theta_dot, 0.0, epsilon = 1e-12);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn damped_return_toward_rest_angle() {
        let mut p = test_params();
        p.gravity_torque_nm = 0.0;
        let rest = p.swing.rest_angle_deg;
        let mut s = AnkleState::new(rest + 8.0, 0.0, 0.0);
        let mut a = 0.0;
        let d0 = (s.theta - rest).abs();
        for _ in 0..200 {
            let (n, na) = plant_step(&s, a, 0.0, Phase::Swing, 0.005, &p).unwrap();
            s = n;
            a = na;
        }
        assert!((s.theta - rest).abs() < d0);
    }

    #[test]
    fn rk4_matches_fine_step_reference() {
        // One 5 ms step against the same dynamics at dt = 1e-5 s.
        let p = test_params();
        let s = AnkleState::new(-5.0, 30.0, 0.0);
        let (coarse, _) = plant_step(&s, 0.2, 15.0, Phase::Swing, 0.005, &p).unwrap();
        let mut fine = s;
        let mut a = 0.2;
        for _ in 0..500 {
            let (n, na) = plant_step(&fine, a, 15.0, Phase::Swing, 1e-5, &p).unwrap();
            fine = n;
            a = na;
        }
        assert!((coarse.theta - fine.theta).abs() <= 1e-6);
        assert!((coarse.theta_dot - fine.theta_dot).abs() <= 1e-5);
    }

    #[test]
    fn rk4_order_check() {
        // Halving dt shrinks one-step error against a dt = 1e-5 reference
        // by at least 8x on a smooth segment.
        let p = test_params();
        let s = AnkleState::new(5.0, -40.0, 0.0);
        let a0 = 0.5;
        let u = 12.0;
        let reference = |dt_total: f64| {
            let steps = (dt_total / 1e-5).round() as usize;
            let mut st = s;
            let mut a = a0;
            for _ in 0..steps {
                let (n, na) = plant_step(&st, a, u, Phase::Stance, 1e-5, &p).unwrap();
                st = n;
                a = na;
            }
            st
        };
        let coarse = |dt: f64, steps: usize| {
            let mut st = s;
            let mut a = a0;
            for _ in 0..steps {
                let (n, na) = plant_step(&st, a, u, Phase::Stance, dt, &p).unwrap();
                st = n;
                a = na;
            }
            st
        };
        let r = reference(0.01);
        let e1 = (coarse(0.01, 1).theta - r.theta).abs();
        let e2 = (coarse(0.005, 2).theta - r.theta).abs();
        assert!(
            e1 >= 8.0 * e2,
            "expected >= 8x error reduction, got {e1:.3e} vs {e2:.3e}"
        );
    }

    #[test]
    fn stance_input_plantarflexes() {
        // A plantarflexor burst must drive theta_dot negative within 50 ms.
        let p = test_params();
        let mut s = AnkleState::new(0.0, 0.0, 0.0);
        let mut a = 0.0;
        for _ in 0..10 {
            let (n, na) = plant_step(&s, a, 20.0, Phase::Stance, 0.005, &p).unwrap();
            s = n;
            a = na;
        }
        assert!(s.theta_dot < 0.0, "theta_dot = {}", s.theta_dot);
    }

    #[test]
    fn rejects_bad_step_inputs() {
        let p = test_params();
        let s = AnkleState::new(0.0, 0.0, 0.0);
        assert!(plant_step(&s, 0.0, 10.0, Phase::Stance, 0.0, &p).is_err());
        assert!(plant_step(&s, 0.0, -1.0, Phase::Stance, 0.005, &p).is_err());
    }

    #[test]
    fn augment_round_trip() {
        let s = AnkleState::new(10.0, 5.0, 0.3);
        let z = augment_state(&s, 8.0, 5.0);
        assert_eq!(z, nalgebra::Vector3::new(2.0, 0.0, 8.0));
        assert_relative_eq!(z[0] + z[2], s.theta, epsilon = 1e-14);
    }

    #[test]
    fn on_reference_gives_zero_error() {
        let s = AnkleState::new(-3.5, 12.0, 1.0);
        let z = augment_state(&s, -3.5, 12.0);
        assert_eq!(z, nalgebra::Vector3::new(0.0, 0.0, -3.5));
    }
}

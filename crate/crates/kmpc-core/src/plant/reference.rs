//! Parametric gait reference generator.
//!
//! Produces a periodic, C¹ desired-angle profile: the ankle plantarflexes
//! from `swing_target_deg` down to `stance_target_deg` over the stance
//! interval and dorsiflexes back up over the swing interval, each leg
//! following a half-cosine smoothstep. The profile is monotone within each
//! phase and has zero desired velocity at every phase boundary, so both
//! θ_d and θ̇_d are continuous across switches. Rest gaps hold the stance
//! end angle.

use serde::{Deserialize, Serialize};

use super::schedule::GaitPhaseSchedule;
use crate::error::{Error, Result};

/// Angle range tied to the foot-clearance constraint.
pub const THETA_MIN_DEG: f64 = -20.0;
pub const THETA_MAX_DEG: f64 = 25.0;

/// Generator parameters for the desired gait trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceParams {
    /// Angle reached at the end of stance (degrees, plantarflexed).
    pub stance_target_deg: f64,
    /// Angle reached at the end of swing (degrees, dorsiflexed).
    pub swing_target_deg: f64,
}

impl Default for ReferenceParams {
    fn default() -> Self {
        ReferenceParams {
            stance_target_deg: -15.0,
            swing_target_deg: 10.0,
        }
    }
}

impl ReferenceParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stance_target_deg", self.stance_target_deg),
            ("swing_target_deg", self.swing_target_deg),
        ] {
            if !v.is_finite() || v < THETA_MIN_DEG || v > THETA_MAX_DEG {
                return Err(Error::Config(format!(
                    "reference {name} = {v} outside [{THETA_MIN_DEG}, {THETA_MAX_DEG}] deg"
                )));
            }
        }
        Ok(())
    }

    /// Desired angle and velocity at time `t` for the given schedule.
    pub fn sample(&self, schedule: &GaitPhaseSchedule, t: f64) -> (f64, f64) {
        let period = schedule.cycle_period_s();
        let tau = (t - schedule.t_start_s).rem_euclid(period) + schedule.t_start_s;
        let hi = self.swing_target_deg;
        let lo = self.stance_target_deg;
        if tau < schedule.t_stance_s {
            // Stance: hi -> lo.
            let duration = schedule.stance_duration_s();
            let s = (tau - schedule.t_start_s) / duration;
            smoothstep_leg(hi, lo, s, duration)
        } else if tau < schedule.t_swing_s {
            // Rest gap: hold the stance end angle.
            (lo, 0.0)
        } else {
            // Swing: lo -> hi.
            let duration = schedule.swing_duration_s();
            let s = (tau - schedule.t_swing_s) / duration;
            smoothstep_leg(lo, hi, s, duration)
        }
    }
}

/// Half-cosine smoothstep from `from` to `to` over normalized progress
/// `s ∈ [0, 1)` lasting `duration` seconds. Returns (value, derivative).
fn smoothstep_leg(from: f64, to: f64, s: f64, duration: f64) -> (f64, f64) {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let w = (half_pi * s).sin();
    let value = from + (to - from) * w * w;
    // d/dt sin^2(pi s / 2) = (pi / 2) sin(pi s) / duration
    let velocity = (to - from) * half_pi * (std::f64::consts::PI * s).sin() / duration;
    (value, velocity)
}

/// Densely sampled reference over a window of time.
#[derive(Clone, Debug)]
pub struct ReferenceTrajectory {
    pub sample_rate_hz: f64,
    pub t: Vec<f64>,
    pub theta_d: Vec<f64>,
    pub theta_dot_d: Vec<f64>,
    pub params: ReferenceParams,
}

/// Sample the reference at `sample_rate_hz` over `[0, duration_s)`.
pub fn reference_trajectory(
    schedule: &GaitPhaseSchedule,
    params: &ReferenceParams,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<ReferenceTrajectory> {
    schedule.validate()?;
    params.validate()?;
    if duration_s <= 0.0 || sample_rate_hz <= 0.0 {
        return Err(Error::Config(
            "reference duration and sample rate must be positive".into(),
        ));
    }
    let n = (duration_s * sample_rate_hz).round() as usize;
    let dt = 1.0 / sample_rate_hz;
    let mut t = Vec::with_capacity(n);
    let mut theta_d = Vec::with_capacity(n);
    let mut theta_dot_d = Vec::with_capacity(n);
    for k in 0..n {
        let tk = k as f64 * dt;
        let (pos, vel) = params.sample(schedule, tk);
        t.push(tk);
        theta_d.push(pos);
        theta_dot_d.push(vel);
    }
    Ok(ReferenceTrajectory {
        sample_rate_hz,
        t,
        theta_d,
        theta_dot_d,
        params: *params,
    })
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Largest central-difference mismatch between θ_d and θ̇_d (deg/s).
    pub fn velocity_consistency_error(&self) -> f64 {
        let n = self.len();
        if n < 3 {
            return 0.0;
        }
        let dt = 1.0 / self.sample_rate_hz;
        let mut worst = 0.0f64;
        for k in 1..n - 1 {
            let fd = (self.theta_d[k + 1] - self.theta_d[k - 1]) / (2.0 * dt);
            worst = worst.max((fd - self.theta_dot_d[k]).abs());
        }
        worst
    }
}

//! Gait phase timing and the stance/swing indicator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gait phase. Stance maps to indicator 0, swing to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// Foot on the ground; plantarflexor (GAS) channel active.
    Stance,
    /// Foot in the air; dorsiflexor (TA) channel active.
    Swing,
}

impl Phase {
    /// Indicator value: 0 for stance, 1 for swing.
    pub fn indicator(self) -> u8 {
        match self {
            Phase::Stance => 0,
            Phase::Swing => 1,
        }
    }

    pub fn from_indicator(sigma: u8) -> Result<Phase> {
        match sigma {
            0 => Ok(Phase::Stance),
            1 => Ok(Phase::Swing),
            other => Err(Error::Data(format!(
                "phase indicator must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Stance => "stance",
            Phase::Swing => "swing",
        }
    }
}

/// Periodic stance/swing timing within one gait cycle.
///
/// One cycle covers `[t_start_s, t_end_s)`: stance occupies
/// `[t_start_s, t_stance_s)`, swing `[t_swing_s, t_end_s)`, and an optional
/// rest gap `[t_stance_s, t_swing_s)` inherits the stance phase. Intervals
/// are closed on the left. The schedule repeats with period
/// `t_end_s - t_start_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitPhaseSchedule {
    pub t_start_s: f64,
    pub t_stance_s: f64,
    pub t_swing_s: f64,
    pub t_end_s: f64,
}

impl GaitPhaseSchedule {
    /// Cycle with an even stance/swing split and no rest gap.
    pub fn even_split(cycle_period_s: f64) -> Self {
        GaitPhaseSchedule {
            t_start_s: 0.0,
            t_stance_s: 0.5 * cycle_period_s,
            t_swing_s: 0.5 * cycle_period_s,
            t_end_s: cycle_period_s,
        }
    }

    pub fn cycle_period_s(&self) -> f64 {
        self.t_end_s - self.t_start_s
    }

    pub fn stance_duration_s(&self) -> f64 {
        self.t_stance_s - self.t_start_s
    }

    pub fn swing_duration_s(&self) -> f64 {
        self.t_end_s - self.t_swing_s
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.t_start_s, self.t_stance_s, self.t_swing_s, self.t_end_s]
            .iter()
            .all(|v| v.is_finite());
        if !ok {
            return Err(Error::Config("gait schedule times must be finite".into()));
        }
        if !(self.t_start_s < self.t_stance_s
            && self.t_stance_s <= self.t_swing_s
            && self.t_swing_s < self.t_end_s)
        {
            return Err(Error::Config(format!(
                "gait schedule ordering violated: need t_start < t_stance <= t_swing < t_end, \
                 got {} < {} <= {} < {}",
                self.t_start_s, self.t_stance_s, self.t_swing_s, self.t_end_s
            )));
        }
        Ok(())
    }

    /// Phase at time `t` (seconds), wrapping periodically.
    pub fn phase_at(&self, t: f64) -> Phase {
        let tau = (t - self.t_start_s).rem_euclid(self.cycle_period_s()) + self.t_start_s;
        if tau < self.t_swing_s {
            Phase::Stance
        } else {
            Phase::Swing
        }
    }
}

/// Indicator value of [`GaitPhaseSchedule::phase_at`].
pub fn phase_indicator(t: f64, schedule: &GaitPhaseSchedule) -> Result<u8> {
    schedule.validate()?;
    Ok(schedule.phase_at(t).indicator())
}

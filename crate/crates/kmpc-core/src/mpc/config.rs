//! Controller configuration.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::dare::DareOptions;
use crate::error::{Error, Result};
use crate::plant::Phase;

/// Where the receding-horizon predictions evolve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSpace {
    /// Propagate the full lifted state; project for costs and constraints.
    Lifted,
    /// Propagate the three-state projected predictor.
    Projected,
}

/// Stimulation box for one phase (mA).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub min_ma: f64,
    pub max_ma: f64,
}

impl InputBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_ma.is_finite() && self.max_ma.is_finite()) {
            return Err(Error::Config("input bounds must be finite".into()));
        }
        if self.min_ma > self.max_ma {
            return Err(Error::Config(format!(
                "infeasible input box: min {} > max {}",
                self.min_ma, self.max_ma
            )));
        }
        Ok(())
    }
}

/// First-order solver controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iter: usize,
    /// Termination threshold on the projected-gradient norm.
    pub grad_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iter: 2_000,
            grad_tol: 1e-9,
        }
    }
}

/// Receding-horizon controller configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Prediction horizon (steps).
    pub horizon_steps: usize,
    /// Control period (seconds); with the default horizon this spans 0.1 s.
    pub sample_period_s: f64,
    /// Error-state weight, row-major 2x2 over `(e_θ, e_θ̇)`.
    pub q_weights: [f64; 4],
    /// Input weight per phase.
    pub r_stance: f64,
    pub r_swing: f64,
    /// Small uniform weight added when lifting Q so the terminal Riccati
    /// equation stays well posed.
    pub q_lift_reg: f64,
    pub stance_bounds: InputBounds,
    pub swing_bounds: InputBounds,
    /// State box (degrees, deg/s). Velocity bounds are optional.
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub theta_dot_min_deg_s: Option<f64>,
    pub theta_dot_max_deg_s: Option<f64>,
    /// Quadratic hinge weight on state-box violations.
    pub state_penalty_weight: f64,
    /// Scale factor applied to the state penalty in hard mode.
    pub hard_state_mode: bool,
    /// Terminal-set radius `ε` and its soft-penalty weight.
    pub terminal_eps: f64,
    pub terminal_penalty_weight: f64,
    pub prediction_space: PredictionSpace,
    pub dare: DareOptions,
    pub solver: SolverSettings,
    /// Dictionary the model must have been trained with.
    pub expected_dictionary: String,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon_steps: 20,
            sample_period_s: 0.005,
            q_weights: [1.0, 0.0, 0.0, 0.01],
            r_stance: 1e-4,
            r_swing: 1e-4,
            q_lift_reg: 0.0,
            stance_bounds: InputBounds {
                min_ma: 0.0,
                max_ma: 30.0,
            },
            swing_bounds: InputBounds {
                min_ma: 0.0,
                max_ma: 30.0,
            },
            theta_min_deg: -20.0,
            theta_max_deg: 25.0,
            theta_dot_min_deg_s: None,
            theta_dot_max_deg_s: None,
            state_penalty_weight: 10.0,
            hard_state_mode: false,
            // Calibrated as the 95th percentile of terminal cost over
            // unconstrained nominal tracking runs.
            terminal_eps: 2.0,
            terminal_penalty_weight: 1.0,
            prediction_space: PredictionSpace::Lifted,
            dare: DareOptions::default(),
            solver: SolverSettings::default(),
            expected_dictionary: "custom".into(),
        }
    }
}

impl MpcConfig {
    /// Narrower per-phase stimulation ranges used in the walking protocol.
    pub fn with_clinical_presets(mut self) -> Self {
        self.stance_bounds = InputBounds {
            min_ma: 10.0,
            max_ma: 25.0,
        };
        self.swing_bounds = InputBounds {
            min_ma: 10.0,
            max_ma: 20.0,
        };
        self
    }

    pub fn bounds(&self, phase: Phase) -> &InputBounds {
        match phase {
            Phase::Stance => &self.stance_bounds,
            Phase::Swing => &self.swing_bounds,
        }
    }

    pub fn r_weight(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Stance => self.r_stance,
            Phase::Swing => self.r_swing,
        }
    }

    pub fn q_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.q_weights[0],
            self.q_weights[1],
            self.q_weights[2],
            self.q_weights[3],
        )
    }

    /// Effective hinge weight for the state box.
    pub fn effective_state_weight(&self) -> f64 {
        if self.hard_state_mode {
            self.state_penalty_weight * 1e4
        } else {
            self.state_penalty_weight
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::Config("horizon must be >= 1 step".into()));
        }
        if !(self.sample_period_s > 0.0) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        let q = self.q_matrix();
        // Positive definiteness of the symmetric part.
        let sym = (q + q.transpose()) * 0.5;
        let det = sym.determinant();
        if !(sym[(0, 0)] > 0.0 && det > 0.0) {
            return Err(Error::Config(
                "state weight Q must be positive definite".into(),
            ));
        }
        if !(self.r_stance > 0.0 && self.r_swing > 0.0) {
            return Err(Error::Config("input weights must be positive".into()));
        }
        if self.q_lift_reg < 0.0 {
            return Err(Error::Config("q_lift_reg must be non-negative".into()));
        }
        self.stance_bounds.validate()?;
        self.swing_bounds.validate()?;
        if self.theta_min_deg >= self.theta_max_deg {
            return Err(Error::Config("state angle box is inverted".into()));
        }
        if let (Some(lo), Some(hi)) = (self.theta_dot_min_deg_s, self.theta_dot_max_deg_s) {
            if lo >= hi {
                return Err(Error::Config("state velocity box is inverted".into()));
            }
        }
        if self.state_penalty_weight < 0.0 || self.terminal_penalty_weight < 0.0 {
            return Err(Error::Config("penalty weights must be non-negative".into()));
        }
        if !(self.terminal_eps > 0.0) {
            return Err(Error::Config("terminal-set radius must be positive".into()));
        }
        if self.solver.max_iter == 0 || !(self.solver.grad_tol > 0.0) {
            return Err(Error::Config("solver settings invalid".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("mpc config serialization failed: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: MpcConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("mpc config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|err| Error::io(path, err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_spans_100ms() {
        let cfg = MpcConfig::default();
        cfg.validate().unwrap();
        let span = cfg.horizon_steps as f64 * cfg.sample_period_s;
        assert!((0.1..=0.2).contains(&span));
        assert_eq!(cfg.stance_bounds.min_ma, 0.0);
        assert_eq!(cfg.stance_bounds.max_ma, 30.0);
    }

    #[test]
    fn clinical_presets_narrow_the_boxes() {
        let cfg = MpcConfig::default().with_clinical_presets();
        assert_eq!(cfg.stance_bounds.min_ma, 10.0);
        assert_eq!(cfg.stance_bounds.max_ma, 25.0);
        assert_eq!(cfg.swing_bounds.min_ma, 10.0);
        assert_eq!(cfg.swing_bounds.max_ma, 20.0);
    }

    #[test]
    fn inverted_box_rejected() {
        let mut cfg = MpcConfig::default();
        cfg.swing_bounds = InputBounds {
            min_ma: 20.0,
            max_ma: 10.0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = MpcConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = MpcConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn indefinite_q_rejected() {
        let mut cfg = MpcConfig::default();
        cfg.q_weights = [1.0, 2.0, 2.0, 1.0];
        assert!(cfg.validate().is_err());
    }
}

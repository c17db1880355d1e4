//! Observable dictionaries defining the lifting map.
//!
//! Each dictionary maps the augmented state `z ∈ ℝ³` to a vector of scalar
//! observables; the input lift is the identity so downstream optimization
//! stays quadratic in the stimulation. Delay embedding stacks the most
//! recent `L` samples, state lifts first and input lifts after:
//! `Ψ = [Ψ_x(z_k); …; Ψ_x(z_{k-L+1}); u_k; …; u_{k-L+1}]`.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angle scale for nonlinear observables (per degree). Chosen so the
/// gait range maps to about one radian and the trigonometric and
/// quadratic entries stay linearly independent from the linear terms.
const ANGLE_SCALE: f64 = 1.0 / 20.0;
/// Velocity scale (per deg/s).
const VEL_SCALE: f64 = 1.0 / 100.0;
/// Frequency-scale multipliers for the trigonometric library.
const TRIG_SCALE_MULTS: [f64; 3] = [0.6, 1.0, 1.8];

/// Which observable library to use. Nonlinear entries act on scaled
/// coordinates so the library stays well-conditioned over the gait range
/// in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    /// Identity lift of `z` (3 observables).
    State,
    /// Linear terms plus sines, cosines, squares, and cross products of
    /// the physical angle and the velocity error (12 observables; 13 with
    /// the input slot at L = 1).
    Custom,
    /// Linear terms plus sines and cosines of every coordinate at two
    /// frequency scales (15 observables).
    Trig,
}

impl DictionaryKind {
    pub fn name(self) -> &'static str {
        match self {
            DictionaryKind::State => "state",
            DictionaryKind::Custom => "custom",
            DictionaryKind::Trig => "trig",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "state" => Ok(DictionaryKind::State),
            "custom" => Ok(DictionaryKind::Custom),
            "trig" => Ok(DictionaryKind::Trig),
            other => Err(Error::Config(format!(
                "unknown dictionary {other:?}; expected state, custom, or trig"
            ))),
        }
    }
}

/// A named observable library plus the embedding length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservableDictionary {
    pub kind: DictionaryKind,
    /// Number of past samples stacked into the lifted state (L >= 1).
    pub embedding: usize,
}

impl ObservableDictionary {
    pub fn new(kind: DictionaryKind, embedding: usize) -> Result<Self> {
        if embedding == 0 {
            return Err(Error::Config("embedding length must be >= 1".into()));
        }
        Ok(ObservableDictionary { kind, embedding })
    }

    /// State observables contributed by a single sample.
    pub fn state_dim_per_sample(&self) -> usize {
        match self.kind {
            DictionaryKind::State => 3,
            DictionaryKind::Custom => 12,
            DictionaryKind::Trig => 3 + 6 * TRIG_SCALE_MULTS.len(),
        }
    }

    /// Input observables contributed by a single sample.
    pub fn input_dim_per_sample(&self) -> usize {
        1
    }

    /// Dimension of the stacked state lift (`n_x`).
    pub fn state_dim(&self) -> usize {
        self.embedding * self.state_dim_per_sample()
    }

    /// Dimension of the stacked input lift (`n_u`).
    pub fn input_dim(&self) -> usize {
        self.embedding * self.input_dim_per_sample()
    }

    /// Total lifted dimension `P = n_x + n_u`.
    pub fn lifted_dim(&self) -> usize {
        self.state_dim() + self.input_dim()
    }

    /// Per-sample state lift `Ψ_x(z)`.
    pub fn lift_state_sample(&self, z: &Vector3<f64>) -> DVector<f64> {
        match self.kind {
            DictionaryKind::State => DVector::from_column_slice(&[z[0], z[1], z[2]]),
            DictionaryKind::Custom => {
                // Nonlinear terms act on the physical angle (error plus
                // reference, where the torque curves live) and on the
                // reference coordinate (whose within-phase propagation is
                // nonlinear); squares and cross products bring in the
                // velocity error.
                let angle = ANGLE_SCALE * (z[0] + z[2]);
                let vel = VEL_SCALE * z[1];
                let refc = ANGLE_SCALE * z[2];
                DVector::from_column_slice(&[
                    z[0],
                    z[1],
                    z[2],
                    angle.sin(),
                    angle.cos(),
                    refc.sin(),
                    refc.cos(),
                    angle * angle,
                    vel * vel,
                    angle * vel,
                    vel * refc,
                    refc * refc,
                ])
            }
            DictionaryKind::Trig => {
                // Scaled coordinates the plant torques depend on:
                // physical angle, velocity error, and the reference
                // coordinate.
                let angle = ANGLE_SCALE * (z[0] + z[2]);
                let vel = VEL_SCALE * z[1];
                let refc = ANGLE_SCALE * z[2];
                let coords = [angle, vel, refc];
                let mut v = Vec::with_capacity(21);
                v.extend_from_slice(&[z[0], z[1], z[2]]);
                for mult in TRIG_SCALE_MULTS {
                    for c in coords {
                        let x = mult * c;
                        v.push(x.sin());
                        v.push(x.cos());
                    }
                }
                DVector::from_vec(v)
            }
        }
    }

    /// Stacked state lift of a window ordered newest first
    /// (`window[0]` is the current sample). Requires `window.len() == L`.
    pub fn lift_state_window(&self, window: &[Vector3<f64>]) -> DVector<f64> {
        assert_eq!(window.len(), self.embedding, "window must hold L samples");
        let per = self.state_dim_per_sample();
        let mut out = DVector::zeros(self.state_dim());
        for (i, z) in window.iter().enumerate() {
            out.rows_mut(i * per, per)
                .copy_from(&self.lift_state_sample(z));
        }
        out
    }

    /// Stacked input lift of a window ordered newest first.
    pub fn lift_input_window(&self, window: &[f64]) -> DVector<f64> {
        assert_eq!(window.len(), self.embedding, "window must hold L inputs");
        DVector::from_column_slice(window)
    }

    /// Full lift `[Ψ_x; Ψ_u]` of matched state/input windows.
    pub fn lift_window(&self, z_window: &[Vector3<f64>], u_window: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.lifted_dim());
        out.rows_mut(0, self.state_dim())
            .copy_from(&self.lift_state_window(z_window));
        out.rows_mut(self.state_dim(), self.input_dim())
            .copy_from(&self.lift_input_window(u_window));
        out
    }

    /// Lift the current sample given a history buffer of past samples.
    /// Errors unless the buffer holds at least `L - 1` entries.
    pub fn lift(&self, z: &Vector3<f64>, u: f64, history: &History) -> Result<DVector<f64>> {
        if history.len() + 1 < self.embedding {
            return Err(Error::Data(format!(
                "warm-up: dictionary with L = {} needs {} past samples, history holds {}",
                self.embedding,
                self.embedding - 1,
                history.len()
            )));
        }
        let mut zs = Vec::with_capacity(self.embedding);
        let mut us = Vec::with_capacity(self.embedding);
        zs.push(*z);
        us.push(u);
        for (pz, pu) in history.iter_newest_first().take(self.embedding - 1) {
            zs.push(*pz);
            us.push(*pu);
        }
        Ok(self.lift_window(&zs, &us))
    }
}

/// Bounded buffer of past `(z, u)` samples, newest last.
#[derive(Clone, Debug, Default)]
pub struct History {
    entries: std::collections::VecDeque<(Vector3<f64>, f64)>,
    capacity: usize,
}

impl History {
    /// A buffer able to serve dictionaries with embedding up to `l`.
    pub fn with_embedding(l: usize) -> Self {
        History {
            entries: std::collections::VecDeque::with_capacity(l.saturating_sub(1)),
            capacity: l.saturating_sub(1),
        }
    }

    pub fn push(&mut self, z: Vector3<f64>, u: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((z, u));
    }

    /// Fill the buffer by replicating one sample (warm-up convention).
    pub fn warm_up(&mut self, z: Vector3<f64>, u: f64) {
        self.entries.clear();
        for _ in 0..self.capacity {
            self.entries.push_back((z, u));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter_newest_first(&self) -> impl Iterator<Item = &(Vector3<f64>, f64)> {
        self.entries.iter().rev()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn custom_at_origin() {
        let dict = ObservableDictionary::new(DictionaryKind::Custom, 1).unwrap();
        let psi = dict.lift_window(&[Vector3::zeros()], &[0.0]);
        assert_eq!(psi.len(), 13);
        // Linear terms zero, sines zero, cosines one, quadratics zero, input zero.
        for i in [0, 1, 2, 3, 5, 7, 8, 9, 10, 11, 12] {
            assert_eq!(psi[i], 0.0, "entry {i}");
        }
        assert_eq!(psi[4], 1.0);
        assert_eq!(psi[6], 1.0);
    }

    #[test]
    fn state_dict_is_identity_lift() {
        let dict = ObservableDictionary::new(DictionaryKind::State, 1).unwrap();
        let z = Vector3::new(1.5, -2.0, 7.0);
        let psi = dict.lift_window(&[z], &[4.0]);
        assert_eq!(psi.as_slice(), &[1.5, -2.0, 7.0, 4.0]);
    }

    #[test]
    fn embedding_multiplies_dimension() {
        let dict = ObservableDictionary::new(DictionaryKind::Custom, 8).unwrap();
        assert_eq!(dict.lifted_dim(), 8 * 13);
        assert_eq!(dict.state_dim(), 8 * 12);
        assert_eq!(dict.input_dim(), 8);
    }

    #[test]
    fn lift_requires_history() {
        let dict = ObservableDictionary::new(DictionaryKind::State, 3).unwrap();
        let mut history = History::with_embedding(3);
        let z = Vector3::new(1.0, 0.0, 0.0);
        assert!(dict.lift(&z, 0.0, &history).is_err());
        history.warm_up(z, 0.0);
        let psi = dict.lift(&z, 0.0, &history).unwrap();
        assert_eq!(psi.len(), 12);
    }

    #[test]
    fn window_order_is_newest_first() {
        let dict = ObservableDictionary::new(DictionaryKind::State, 2).unwrap();
        let newest = Vector3::new(1.0, 2.0, 3.0);
        let older = Vector3::new(4.0, 5.0, 6.0);
        let psi = dict.lift_window(&[newest, older], &[7.0, 8.0]);
        assert_eq!(psi.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn trig_dimension() {
        let dict = ObservableDictionary::new(DictionaryKind::Trig, 1).unwrap();
        assert_eq!(dict.lifted_dim(), 22);
    }
}

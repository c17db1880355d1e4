//! Switched ankle-gait plant: dynamics, reference generation, and
//! training-data synthesis.

mod dataset;
mod dynamics;
mod reference;
mod schedule;

pub use dataset::{
    generate_training_dataset, read_dataset_csv, read_dataset_meta, sidecar_path, simulate_gait,
    simulate_gait_from, write_dataset_csv, write_dataset_with_meta, DatasetMeta, Episode,
    ProtocolConfig, Sample, TrajectoryDataset, DATASET_CSV_HEADER,
};
pub use dynamics::{augment_state, plant_step, AnkleState, PhaseParams, PlantParams};
pub use reference::{
    reference_trajectory, ReferenceParams, ReferenceTrajectory, THETA_MAX_DEG, THETA_MIN_DEG,
};
pub use schedule::{phase_indicator, GaitPhaseSchedule, Phase};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default plant parameters.
///
/// Each phase actuates against its own passive field: in stance the
/// joint rests dorsiflexed and the plantarflexor pulls it down through
/// the gait range; in swing the unloaded foot hangs toward
/// plantarflexion and the dorsiflexor lifts it. With these values the
/// 10-25 mA stance and 10-20 mA swing ranges produce roughly ±15-20 deg
/// excursions, and every stimulation level in [0, 30] mA has its
/// equilibrium inside the foot-clearance box.
pub fn default_params() -> PlantParams {
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

/// Plant-side configuration file: physical parameters, gait timing, the
/// reference generator, and the data-collection protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub params: PlantParams,
    pub schedule: GaitPhaseSchedule,
    pub reference: ReferenceParams,
    pub protocol: ProtocolConfig,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let protocol = ProtocolConfig::default();
        PlantConfig {
            params: default_params(),
            schedule: GaitPhaseSchedule::even_split(protocol.cycle_period_s()),
            reference: ReferenceParams::default(),
            protocol,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.schedule.validate()?;
        self.reference.validate()?;
        self.protocol.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("plant config serialization failed: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PlantConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("plant config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
        Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|err| Error::io(path, err))
    }
}

/// Per-episode augmented-state series `(z_k, u_k, σ_k)` derived from raw
/// trajectories and the reference generator.
#[derive(Clone, Debug)]
pub struct AugmentedSeries {
    pub episodes: Vec<Vec<(nalgebra::Vector3<f64>, f64, Phase)>>,
    pub sample_rate_hz: f64,
}

impl AugmentedSeries {
    pub fn from_dataset(
        dataset: &TrajectoryDataset,
        schedule: &GaitPhaseSchedule,
        reference: &ReferenceParams,
    ) -> Result<Self> {
        schedule.validate()?;
        reference.validate()?;
        let episodes = dataset
            .episodes
            .iter()
            .map(|ep| {
                ep.samples
                    .iter()
                    .map(|s| {
                        let (theta_d, theta_dot_d) = reference.sample(schedule, s.state.t);
                        let z = augment_state(&s.state, theta_d, theta_dot_d);
                        Ok((z, s.u, Phase::from_indicator(s.sigma)?))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AugmentedSeries {
            episodes,
            sample_rate_hz: dataset.sample_rate_hz,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_and_round_trips() {
        let cfg = PlantConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("stiffness_nm_per_deg"));
        let back = PlantConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn augmented_series_round_trips_theta() {
        let cfg = PlantConfig {
            protocol: ProtocolConfig {
                cycles: 2,
                ..ProtocolConfig::default()
            },
            ..PlantConfig::default()
        };
        let ds =
            generate_training_dataset(&cfg.params, &cfg.schedule, &cfg.protocol, 11).unwrap();
        let series = AugmentedSeries::from_dataset(&ds, &cfg.schedule, &cfg.reference).unwrap();
        for (ep, aug) in ds.episodes.iter().zip(&series.episodes) {
            for (s, (z, u, phase)) in ep.samples.iter().zip(aug) {
                assert!((z[0] + z[2] - s.state.theta).abs() < 1e-12);
                assert_eq!(*u, s.u);
                assert_eq!(phase.indicator(), s.sigma);
            }
        }
    }
}

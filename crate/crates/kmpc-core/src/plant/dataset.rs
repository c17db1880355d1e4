//! Trajectory rollouts and training-data synthesis.

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dynamics::{plant_step, AnkleState, PlantParams};
use super::reference::ReferenceParams;
use super::schedule::{GaitPhaseSchedule, Phase};
use crate::error::{Error, Result};

/// One logged sample of a rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub state: AnkleState,
    /// Applied stimulation (mA).
    pub u: f64,
    /// Phase indicator at the sample instant.
    pub sigma: u8,
}

/// A contiguous rollout at a fixed sample rate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Episode {
    pub samples: Vec<Sample>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Collection of episodes sharing one sample rate, plus provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub episodes: Vec<Episode>,
    pub sample_rate_hz: f64,
    pub seed: u64,
    /// Human-readable description of the input sweep.
    pub input_sweep: String,
}

impl TrajectoryDataset {
    pub fn total_samples(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }
}

/// Data-generation protocol: how many cycles to roll out and how to
/// excite the plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Number of gait cycles (one episode per cycle).
    pub cycles: usize,
    /// Samples per cycle; together with the rate this fixes the period.
    pub samples_per_cycle: usize,
    pub sample_rate_hz: f64,
    /// Stimulation sweep bounds (mA); episode levels vary linearly.
    pub input_min_ma: f64,
    pub input_max_ma: f64,
    /// Initial-angle sampling box (degrees).
    pub init_angle_min_deg: f64,
    pub init_angle_max_deg: f64,
    /// Initial-velocity sampling box (deg/s).
    pub init_velocity_min_deg_s: f64,
    pub init_velocity_max_deg_s: f64,
}

/// ±2 rad/s expressed in deg/s.
const TWO_RAD_S_IN_DEG_S: f64 = 2.0 * 180.0 / std::f64::consts::PI;

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            cycles: 150,
            samples_per_cycle: 200,
            sample_rate_hz: 200.0,
            input_min_ma: 0.0,
            input_max_ma: 30.0,
            init_angle_min_deg: -20.0,
            init_angle_max_deg: 25.0,
            init_velocity_min_deg_s: -TWO_RAD_S_IN_DEG_S,
            init_velocity_max_deg_s: TWO_RAD_S_IN_DEG_S,
        }
    }
}

impl ProtocolConfig {
    pub fn cycle_period_s(&self) -> f64 {
        self.samples_per_cycle as f64 / self.sample_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::Config("protocol requires at least one cycle".into()));
        }
        if self.samples_per_cycle == 0 {
            return Err(Error::Config(
                "protocol requires at least one sample per cycle".into(),
            ));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.input_min_ma >= 0.0 && self.input_max_ma >= self.input_min_ma) {
            return Err(Error::Config(format!(
                "input sweep [{}, {}] mA is invalid",
                self.input_min_ma, self.input_max_ma
            )));
        }
        if self.init_angle_min_deg > self.init_angle_max_deg
            || self.init_velocity_min_deg_s > self.init_velocity_max_deg_s
        {
            return Err(Error::Config("initial-state box is inverted".into()));
        }
        Ok(())
    }
}

/// Roll out the switched plant for `duration_s`, logging one sample per
/// step before advancing. The controller closure sees the current state
/// and phase and returns the stimulation to hold over the step. The
/// muscle starts relaxed.
pub fn simulate_gait<F>(
    params: &PlantParams,
    schedule: &GaitPhaseSchedule,
    controller: F,
    initial: AnkleState,
    duration_s: f64,
    dt: f64,
) -> Result<Episode>
where
    F: FnMut(&AnkleState, Phase) -> Result<f64>,
{
    simulate_gait_from(params, schedule, controller, initial, 0.0, duration_s, dt)
}

/// [`simulate_gait`] with an explicit initial muscle activation.
pub fn simulate_gait_from<F>(
    params: &PlantParams,
    schedule: &GaitPhaseSchedule,
    mut controller: F,
    initial: AnkleState,
    initial_activation: f64,
    duration_s: f64,
    dt: f64,
) -> Result<Episode>
where
    F: FnMut(&AnkleState, Phase) -> Result<f64>,
{
    params.validate()?;
    schedule.validate()?;
    if duration_s <= 0.0 || dt <= 0.0 {
        return Err(Error::Config("duration and dt must be positive".into()));
    }
    let steps = (duration_s / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps);
    let mut state = initial;
    let mut activation = initial_activation;
    for _ in 0..steps {
        let phase = schedule.phase_at(state.t);
        let u = controller(&state, phase)?;
        samples.push(Sample {
            state,
            u,
            sigma: phase.indicator(),
        });
        let (next, next_activation) = plant_step(&state, activation, u, phase, dt, params)?;
        state = next;
        activation = next_activation;
    }
    Ok(Episode { samples })
}

/// Synthesize the identification dataset: one episode per gait cycle,
/// random initial states, and per-phase stimulation levels drawn from a
/// linear grid over the sweep range. The stance channel walks the grid in
/// order; the swing channel walks the same grid under a coprime
/// permutation so the two levels decorrelate across episodes and every
/// recorded cycle contains an input step at the phase switch, as the
/// controller will produce at run time. Deterministic given
/// `(params, schedule, protocol, seed)`; each episode draws from its own
/// seeded stream.
pub fn generate_training_dataset(
    params: &PlantParams,
    schedule: &GaitPhaseSchedule,
    protocol: &ProtocolConfig,
    seed: u64,
) -> Result<TrajectoryDataset> {
    params.validate()?;
    schedule.validate()?;
    protocol.validate()?;
    let expected = protocol.cycle_period_s();
    if (schedule.cycle_period_s() - expected).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "schedule period {} s does not match protocol {} samples at {} Hz ({} s)",
            schedule.cycle_period_s(),
            protocol.samples_per_cycle,
            protocol.sample_rate_hz,
            expected
        )));
    }
    let dt = 1.0 / protocol.sample_rate_hz;
    let duration = protocol.cycle_period_s();
    let denom = (protocol.cycles - 1).max(1) as f64;
    let range = protocol.input_max_ma - protocol.input_min_ma;
    // Coprime stride decorrelating the swing grid walk from the stance
    // one; 89 is prime, so it is coprime with any cycle count that is not
    // a multiple of it.
    let stride: usize = if protocol.cycles % 89 == 0 { 97 } else { 89 };
    let episodes: Result<Vec<Episode>> = (0..protocol.cycles)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(e as u64);
            let theta0 = rng.gen_range(protocol.init_angle_min_deg..=protocol.init_angle_max_deg);
            let theta_dot0 =
                rng.gen_range(protocol.init_velocity_min_deg_s..=protocol.init_velocity_max_deg_s);
            let stance_level = protocol.input_min_ma + range * e as f64 / denom;
            let swing_level =
                protocol.input_min_ma + range * ((e * stride) % protocol.cycles) as f64 / denom;
            let initial = AnkleState::new(theta0, theta_dot0, 0.0);
            // The stimulation level is part of the sampled initial
            // condition, so episodes start with the muscle already at its
            // steady activation for the first phase's level.
            simulate_gait_from(
                params,
                schedule,
                |_, phase| {
                    Ok(match phase {
                        Phase::Stance => stance_level,
                        Phase::Swing => swing_level,
                    })
                },
                initial,
                stance_level,
                duration,
                dt,
            )
        })
        .collect();
    Ok(TrajectoryDataset {
        episodes: episodes?,
        sample_rate_hz: protocol.sample_rate_hz,
        seed,
        input_sweep: format!(
            "linear {}..{} mA over {} episodes",
            protocol.input_min_ma, protocol.input_max_ma, protocol.cycles
        ),
    })
}

pub const DATASET_CSV_HEADER: &str = "t,theta,theta_dot,u,sigma,episode";

/// Write the dataset as columnar CSV (`t,theta,theta_dot,u,sigma,episode`).
pub fn write_dataset_csv(dataset: &TrajectoryDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(DATASET_CSV_HEADER);
    out.push('\n');
    for (e, episode) in dataset.episodes.iter().enumerate() {
        for s in &episode.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.state.t, s.state.theta, s.state.theta_dot, s.u, s.sigma, e
            ));
        }
    }
    std::fs::write(path, out).map_err(|err| Error::io(path, err))
}

/// Read a dataset CSV written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path, sample_rate_hz: f64, seed: u64) -> Result<TrajectoryDataset> {
    let file = std::fs::File::open(path).map_err(|err| Error::io(path, err))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|err| Error::io(path, err))?
        .ok_or_else(|| Error::Data(format!("{}: empty dataset file", path.display())))?;
    if header.trim() != DATASET_CSV_HEADER {
        return Err(Error::Data(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut episodes: Vec<Episode> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|err| Error::io(path, err))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Data(format!(
                "{}:{}: expected 6 fields, got {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "{}:{}: bad number {:?}",
                    path.display(),
                    lineno + 2,
                    fields[i]
                ))
            })
        };
        let t = parse(0)?;
        let theta = parse(1)?;
        let theta_dot = parse(2)?;
        let u = parse(3)?;
        let sigma = fields[4].parse::<u8>().map_err(|_| {
            Error::Data(format!(
                "{}:{}: bad sigma {:?}",
                path.display(),
                lineno + 2,
                fields[4]
            ))
        })?;
        Phase::from_indicator(sigma)?;
        let episode_idx = fields[5].parse::<usize>().map_err(|_| {
            Error::Data(format!(
                "{}:{}: bad episode index {:?}",
                path.display(),
                lineno + 2,
                fields[5]
            ))
        })?;
        if episode_idx >= episodes.len() {
            episodes.resize_with(episode_idx + 1, Episode::default);
        }
        episodes[episode_idx].samples.push(Sample {
            state: AnkleState::new(theta, theta_dot, t),
            u,
            sigma,
        });
    }
    if episodes.is_empty() {
        return Err(Error::Data(format!(
            "{}: dataset contains no samples",
            path.display()
        )));
    }
    Ok(TrajectoryDataset {
        episodes,
        sample_rate_hz,
        seed,
        input_sweep: String::new(),
    })
}

/// Write a dataset file plus its provenance sidecar and return both paths.
pub fn write_dataset_with_meta(
    dataset: &TrajectoryDataset,
    meta: &DatasetMeta,
    path: &Path,
) -> Result<std::path::PathBuf> {
    write_dataset_csv(dataset, path)?;
    let meta_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Data(format!("metadata serialization failed: {e}")))?;
    std::fs::write(&meta_path, json).map_err(|err| Error::io(&meta_path, err))?;
    Ok(meta_path)
}

pub fn sidecar_path(dataset_path: &Path) -> std::path::PathBuf {
    let mut os = dataset_path.as_os_str().to_os_string();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}

/// Provenance sidecar stored next to each dataset CSV. Training uses it to
/// rebuild the augmented state without re-specifying the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schedule: GaitPhaseSchedule,
    pub reference: ReferenceParams,
    pub protocol: ProtocolConfig,
    pub seed: u64,
    pub plant_config_sha256: String,
}

pub fn read_dataset_meta(dataset_path: &Path) -> Result<DatasetMeta> {
    let meta_path = sidecar_path(dataset_path);
    let text = std::fs::read_to_string(&meta_path).map_err(|err| Error::io(&meta_path, err))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: bad metadata: {e}", meta_path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PlantParams {
        crate::plant::default_params()
    }

    #[test]
    fn one_cycle_yields_exact_sample_count() {
        let schedule = GaitPhaseSchedule::even_split(1.0);
        let ep = simulate_gait(
            &params(),
            &schedule,
            |_, _| Ok(0.0),
            AnkleState::new(0.0, 0.0, 0.0),
            1.0,
            0.005,
        )
        .unwrap();
        assert_eq!(ep.len(), 200);
    }

    #[test]
    fn gravity_free_symmetric_plant_stays_at_rest() {
        let mut p = params();
        p.gravity_torque_nm = 0.0;
        let schedule = GaitPhaseSchedule::even_split(1.0);
        let ep = simulate_gait(
            &p,
            &schedule,
            |_, _| Ok(0.0),
            AnkleState::new(p.rest_angle_deg, 0.0, 0.0),
            1.0,
            0.005,
        )
        .unwrap();
        assert!(ep
            .samples
            .iter()
            .all(|s| (s.state.theta - p.rest_angle_deg).abs() < 1e-9));
    }

    #[test]
    fn default_protocol_size_and_bounds() {
        let protocol = ProtocolConfig {
            cycles: 10,
            ..ProtocolConfig::default()
        };
        let schedule = GaitPhaseSchedule::even_split(protocol.cycle_period_s());
        let ds = generate_training_dataset(&params(), &schedule, &protocol, 7).unwrap();
        assert_eq!(ds.total_samples(), 10 * 200);
        assert!(ds
            .episodes
            .iter()
            .flat_map(|e| &e.samples)
            .all(|s| s.u >= 0.0 && s.u <= 30.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let protocol = ProtocolConfig {
            cycles: 5,
            ..ProtocolConfig::default()
        };
        let schedule = GaitPhaseSchedule::even_split(protocol.cycle_period_s());
        let a = generate_training_dataset(&params(), &schedule, &protocol, 99).unwrap();
        let b = generate_training_dataset(&params(), &schedule, &protocol, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn smaller_dataset_is_prefix_of_larger() {
        // Per-episode seed streams: the first episodes match across sizes.
        let small = ProtocolConfig {
            cycles: 3,
            ..ProtocolConfig::default()
        };
        let large = ProtocolConfig {
            cycles: 6,
            input_max_ma: small.input_max_ma * 5.0 / 2.0,
            ..ProtocolConfig::default()
        };
        let schedule = GaitPhaseSchedule::even_split(small.cycle_period_s());
        let a = generate_training_dataset(&params(), &schedule, &small, 5).unwrap();
        let b = generate_training_dataset(&params(), &schedule, &large, 5).unwrap();
        // Initial states (not inputs) coincide episode-for-episode.
        for e in 0..3 {
            assert_eq!(
                a.episodes[e].samples[0].state.theta,
                b.episodes[e].samples[0].state.theta
            );
        }
    }

    #[test]
    fn csv_round_trip() {
        let protocol = ProtocolConfig {
            cycles: 2,
            ..ProtocolConfig::default()
        };
        let schedule = GaitPhaseSchedule::even_split(protocol.cycle_period_s());
        let ds = generate_training_dataset(&params(), &schedule, &protocol, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset_csv(&ds, &path).unwrap();
        let back = read_dataset_csv(&path, ds.sample_rate_hz, ds.seed).unwrap();
        assert_eq!(ds.episodes, back.episodes);
    }

    #[test]
    fn zero_cycles_rejected() {
        let protocol = ProtocolConfig {
            cycles: 0,
            ..ProtocolConfig::default()
        };
        let schedule = GaitPhaseSchedule::even_split(1.0);
        assert!(generate_training_dataset(&params(), &schedule, &protocol, 1).is_err());
    }
}

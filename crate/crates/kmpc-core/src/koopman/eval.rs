//! Held-out prediction accuracy reports.

use std::path::Path;

use nalgebra::Vector3;

use super::model::KoopmanModel;
use crate::error::{Error, Result};
use crate::plant::{AugmentedSeries, Phase};

/// How to slide prediction windows over the test episodes.
#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Rollout length per window (samples).
    pub horizon: usize,
    /// First window start within each episode. Starts are clamped up to
    /// `L - 1` so every dictionary sees real history.
    pub start_offset: usize,
    /// Step between window starts; `usize::MAX` yields one window per
    /// episode.
    pub stride: usize,
}

impl EvalOptions {
    /// One window per episode covering `horizon` samples from `start`.
    pub fn single_window(horizon: usize, start: usize) -> Self {
        EvalOptions {
            horizon,
            start_offset: start,
            stride: usize::MAX,
        }
    }
}

/// Angle accuracy over one phase's samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseAccuracy {
    /// Mean of per-window RMSE (degrees).
    pub rmse_deg: f64,
    /// Standard deviation of per-window RMSE (degrees).
    pub sd_deg: f64,
    /// Number of windows contributing.
    pub windows: usize,
}

/// Prediction-accuracy summary for one model on one test set.
#[derive(Clone, Debug)]
pub struct PredictionReport {
    pub dictionary: String,
    pub embedding: usize,
    pub horizon: usize,
    pub stance: PhaseAccuracy,
    pub swing: PhaseAccuracy,
    pub overall: PhaseAccuracy,
}

fn summarize(per_window: &[f64]) -> PhaseAccuracy {
    if per_window.is_empty() {
        return PhaseAccuracy {
            rmse_deg: f64::NAN,
            sd_deg: f64::NAN,
            windows: 0,
        };
    }
    let n = per_window.len() as f64;
    let mean = per_window.iter().sum::<f64>() / n;
    let var = per_window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    PhaseAccuracy {
        rmse_deg: mean,
        sd_deg: var.sqrt(),
        windows: per_window.len(),
    }
}

/// Roll the model over sliding windows of held-out data and report angle
/// RMSE, split by gait phase. Predicted and recorded angles are compared
/// as `θ = z₁ + z₃`.
pub fn evaluate_prediction(
    model: &KoopmanModel,
    test: &AugmentedSeries,
    opts: &EvalOptions,
) -> Result<PredictionReport> {
    if opts.horizon == 0 {
        return Err(Error::Config("evaluation horizon must be >= 1".into()));
    }
    let l = model.dictionary.embedding;
    let start = opts.start_offset.max(l.saturating_sub(1));
    let mut stance_windows = Vec::new();
    let mut swing_windows = Vec::new();
    let mut overall_windows = Vec::new();
    for episode in &test.episodes {
        if episode.len() < start + opts.horizon + 1 {
            continue;
        }
        let mut k0 = start;
        loop {
            if k0 + opts.horizon >= episode.len() {
                break;
            }
            let mut z_window: Vec<Vector3<f64>> = Vec::with_capacity(l);
            let mut u_window: Vec<f64> = Vec::with_capacity(l);
            for back in 0..l {
                let idx = k0.saturating_sub(back);
                z_window.push(episode[idx].0);
                u_window.push(episode[idx].1);
            }
            let inputs: Vec<f64> = (0..opts.horizon).map(|j| episode[k0 + j].1).collect();
            let phases: Vec<Phase> = (0..opts.horizon).map(|j| episode[k0 + j].2).collect();
            let predicted =
                model.rollout_predict(&z_window, &u_window, &inputs, &phases, opts.horizon)?;
            let mut acc: [(f64, usize); 3] = [(0.0, 0); 3];
            for (j, zhat) in predicted.iter().enumerate() {
                let truth = &episode[k0 + 1 + j].0;
                let err = (zhat[0] + zhat[2]) - (truth[0] + truth[2]);
                let bucket = match episode[k0 + 1 + j].2 {
                    Phase::Stance => 0,
                    Phase::Swing => 1,
                };
                acc[bucket].0 += err * err;
                acc[bucket].1 += 1;
                acc[2].0 += err * err;
                acc[2].1 += 1;
            }
            if acc[0].1 > 0 {
                stance_windows.push((acc[0].0 / acc[0].1 as f64).sqrt());
            }
            if acc[1].1 > 0 {
                swing_windows.push((acc[1].0 / acc[1].1 as f64).sqrt());
            }
            overall_windows.push((acc[2].0 / acc[2].1 as f64).sqrt());
            if opts.stride == usize::MAX {
                break;
            }
            k0 += opts.stride;
        }
    }
    if overall_windows.is_empty() {
        return Err(Error::Data(
            "evaluation produced no windows; test episodes shorter than horizon".into(),
        ));
    }
    Ok(PredictionReport {
        dictionary: model.dictionary.kind.name().to_string(),
        embedding: l,
        horizon: opts.horizon,
        stance: summarize(&stance_windows),
        swing: summarize(&swing_windows),
        overall: summarize(&overall_windows),
    })
}

pub const EVAL_CSV_HEADER: &str = "dictionary,phase,horizon,rmse_deg,sd_deg";

/// Write accuracy reports as CSV rows (`pf` stance, `df` swing, plus an
/// `all` row per report).
pub fn write_eval_csv(reports: &[PredictionReport], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(EVAL_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let rows = [
            ("pf", &r.stance),
            ("df", &r.swing),
            ("all", &r.overall),
        ];
        for (phase, acc) in rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.dictionary, phase, r.horizon, acc.rmse_deg, acc.sd_deg
            ));
        }
    }
    std::fs::write(path, out).map_err(|err| Error::io(path, err))
}

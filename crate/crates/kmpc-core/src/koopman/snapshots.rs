//! Lifted snapshot-pair assembly for the per-phase least-squares fits.

use nalgebra::{DMatrix, DVector, Vector3};

use super::dictionary::ObservableDictionary;
use crate::error::{Error, Result};
use crate::plant::{AugmentedSeries, Phase};

/// Paired lifted snapshots for one phase: column j of `next` is the
/// one-step-forward lift of column j of `current`. Pairs never span
/// episode boundaries or phase switches.
#[derive(Clone, Debug)]
pub struct SnapshotMatrices {
    pub current: DMatrix<f64>,
    pub next: DMatrix<f64>,
    pub phase: Phase,
    pub pair_count: usize,
    /// Set when the builder skipped at least one candidate pair because it
    /// crossed a phase switch.
    pub crossings_excluded: bool,
}

/// Lift one sample of an episode with delay embedding; indices before the
/// episode start are clamped to the first sample (warm-up replication).
pub(crate) fn lift_at(
    dict: &ObservableDictionary,
    episode: &[(Vector3<f64>, f64, Phase)],
    k: usize,
) -> DVector<f64> {
    let l = dict.embedding;
    let mut zs = Vec::with_capacity(l);
    let mut us = Vec::with_capacity(l);
    for back in 0..l {
        let idx = k.saturating_sub(back);
        let (z, u, _) = &episode[idx];
        zs.push(*z);
        us.push(*u);
    }
    dict.lift_window(&zs, &us)
}

/// Extract all consecutive same-phase sample pairs from the series, lift
/// them, and assemble the snapshot matrices for `phase`.
///
/// With delay embedding, pairs are taken only where the full history
/// window lies inside the episode, so no fitted column contains
/// replicated warm-up samples.
pub fn build_snapshots(
    series: &AugmentedSeries,
    dict: &ObservableDictionary,
    phase: Phase,
) -> Result<SnapshotMatrices> {
    let p = dict.lifted_dim();
    let first_valid = dict.embedding - 1;
    let mut current_cols: Vec<DVector<f64>> = Vec::new();
    let mut next_cols: Vec<DVector<f64>> = Vec::new();
    let mut crossings_excluded = false;
    for episode in &series.episodes {
        if episode.len() < 2 {
            continue;
        }
        for k in first_valid..episode.len() - 1 {
            let here = episode[k].2;
            let there = episode[k + 1].2;
            if here != there {
                crossings_excluded = true;
                continue;
            }
            if here != phase {
                continue;
            }
            current_cols.push(lift_at(dict, episode, k));
            next_cols.push(lift_at(dict, episode, k + 1));
        }
    }
    let m = current_cols.len();
    if m == 0 {
        return Err(Error::Data(format!(
            "no data for phase {}: dataset contains no consecutive {} sample pairs",
            phase.name(),
            phase.name()
        )));
    }
    let mut current = DMatrix::zeros(p, m);
    let mut next = DMatrix::zeros(p, m);
    for (j, (c, n)) in current_cols.iter().zip(&next_cols).enumerate() {
        current.set_column(j, c);
        next.set_column(j, n);
    }
    Ok(SnapshotMatrices {
        current,
        next,
        phase,
        pair_count: m,
        crossings_excluded,
    })
}

//! Closed-loop run logs: CSV format and summary statistics.

use std::io::{BufRead, BufReader};
use std::path::Path;

use super::controller::{RunLog, RunRow};
use crate::error::{Error, Result};

pub const RUN_CSV_HEADER: &str =
    "t,theta,theta_d,theta_dot,theta_dot_d,u,sigma,cost,solve_ms,converged";

/// Aggregate tracking and solver statistics for one run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    /// Angle RMSE over the whole run (degrees).
    pub rmse_deg: f64,
    /// Mean and SD of per-cycle angle RMSE.
    pub cycle_rmse_mean_deg: f64,
    pub cycle_rmse_sd_deg: f64,
    /// Per-phase RMSE (stance, swing).
    pub stance_rmse_deg: f64,
    pub swing_rmse_deg: f64,
    pub input_violations: usize,
    pub state_violations: usize,
    pub solve_ms_median: f64,
    pub solve_ms_p95: f64,
    pub solve_ms_max: f64,
    pub unconverged_steps: usize,
    pub cycles: usize,
}

impl RunLog {
    /// Tracking error of one row (degrees).
    fn err(row: &RunRow) -> f64 {
        row.theta - row.theta_d
    }

    pub fn summary(
        &self,
        u_min: f64,
        u_max: f64,
        theta_min: f64,
        theta_max: f64,
    ) -> RunSummary {
        let rmse = |rows: &[&RunRow]| -> f64 {
            if rows.is_empty() {
                return f64::NAN;
            }
            (rows.iter().map(|r| Self::err(r).powi(2)).sum::<f64>() / rows.len() as f64).sqrt()
        };
        let all: Vec<&RunRow> = self.rows.iter().collect();
        let stance: Vec<&RunRow> = self.rows.iter().filter(|r| r.sigma == 0).collect();
        let swing: Vec<&RunRow> = self.rows.iter().filter(|r| r.sigma == 1).collect();

        // Per-cycle RMSE in the mean ± SD convention.
        let mut per_cycle: Vec<f64> = Vec::new();
        let mut cycle_rows: Vec<&RunRow> = Vec::new();
        let mut current_cycle = 0usize;
        for row in &self.rows {
            let cycle = (row.t / self.cycle_period_s).floor() as usize;
            if cycle != current_cycle && !cycle_rows.is_empty() {
                per_cycle.push(rmse(&cycle_rows));
                cycle_rows.clear();
            }
            current_cycle = cycle;
            cycle_rows.push(row);
        }
        if !cycle_rows.is_empty() {
            per_cycle.push(rmse(&cycle_rows));
        }
        let n = per_cycle.len().max(1) as f64;
        let mean = per_cycle.iter().sum::<f64>() / n;
        let sd = (per_cycle.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();

        let input_violations = self
            .rows
            .iter()
            .filter(|r| r.u < u_min - 1e-12 || r.u > u_max + 1e-12)
            .count();
        let state_violations = self
            .rows
            .iter()
            .filter(|r| r.theta < theta_min || r.theta > theta_max)
            .count();

        let mut solve_times: Vec<f64> = self.rows.iter().map(|r| r.solve_ms).collect();
        solve_times.sort_by(|a, b| a.total_cmp(b));
        let pick = |q: f64| -> f64 {
            if solve_times.is_empty() {
                return f64::NAN;
            }
            let idx = ((solve_times.len() - 1) as f64 * q).round() as usize;
            solve_times[idx]
        };

        RunSummary {
            rmse_deg: rmse(&all),
            cycle_rmse_mean_deg: mean,
            cycle_rmse_sd_deg: sd,
            stance_rmse_deg: rmse(&stance),
            swing_rmse_deg: rmse(&swing),
            input_violations,
            state_violations,
            solve_ms_median: pick(0.5),
            solve_ms_p95: pick(0.95),
            solve_ms_max: pick(1.0),
            unconverged_steps: self.rows.iter().filter(|r| !r.converged).count(),
            cycles: per_cycle.len(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(RUN_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.theta,
                r.theta_d,
                r.theta_dot,
                r.theta_dot_d,
                r.u,
                r.sigma,
                r.cost,
                r.solve_ms,
                r.converged
            ));
        }
        std::fs::write(path, out).map_err(|err| Error::io(path, err))
    }

    pub fn read_csv(path: &Path, sample_period_s: f64, cycle_period_s: f64) -> Result<RunLog> {
        let file = std::fs::File::open(path).map_err(|err| Error::io(path, err))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|err| Error::io(path, err))?
            .ok_or_else(|| Error::Data(format!("{}: empty run log", path.display())))?;
        if header.trim() != RUN_CSV_HEADER {
            return Err(Error::Data(format!(
                "{}: unexpected run log header {header:?}",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|err| Error::io(path, err))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(Error::Data(format!(
                    "{}:{}: expected 10 fields, got {}",
                    path.display(),
                    lineno + 2,
                    fields.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i].parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "{}:{}: bad number {:?}",
                        path.display(),
                        lineno + 2,
                        fields[i]
                    ))
                })
            };
            rows.push(RunRow {
                t: num(0)?,
                theta: num(1)?,
                theta_d: num(2)?,
                theta_dot: num(3)?,
                theta_dot_d: num(4)?,
                u: num(5)?,
                sigma: fields[6].parse::<u8>().map_err(|_| {
                    Error::Data(format!(
                        "{}:{}: bad sigma",
                        path.display(),
                        lineno + 2
                    ))
                })?,
                cost: num(7)?,
                solve_ms: num(8)?,
                converged: fields[9].trim() == "true",
            });
        }
        Ok(RunLog {
            rows,
            sample_period_s,
            cycle_period_s,
        })
    }
}

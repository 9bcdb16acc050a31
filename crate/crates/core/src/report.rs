//! Summaries of a finished run artifact: the horizon trend, the model-error
//! trend and a per-interval table for external plotting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{read_metrics, Evaluation, MetricsRow, RunConfig, Snapshot, CONFIG_FILE, METRICS_FILE, SNAPSHOT_FILE};
use crate::error::{Error, Result};
use crate::stats::{mean, spearman};

/// Mean achieved planning horizon per interval and its rank correlation
/// with training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    /// `(env_step, mean achieved horizon)` for intervals that planned.
    pub intervals: Vec<(usize, f64)>,
    /// `None` with fewer than two intervals or a constant series.
    pub spearman: Option<f64>,
    pub mean: f64,
}

/// Trend of one metric column over the intervals where it was measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub points: usize,
    pub first: Option<f64>,
    pub last: Option<f64>,
    pub mean: Option<f64>,
    pub spearman: Option<f64>,
}

fn finite_series(rows: &[MetricsRow], column: impl Fn(&MetricsRow) -> f64) -> Vec<(usize, f64)> {
    rows.iter()
        .map(|r| (r.env_step, column(r)))
        .filter(|(_, v)| v.is_finite())
        .collect()
}

fn rank_trend(series: &[(usize, f64)]) -> Result<Option<f64>> {
    if series.len() < 2 {
        return Ok(None);
    }
    let t: Vec<f64> = series.iter().map(|p| p.0 as f64).collect();
    let v: Vec<f64> = series.iter().map(|p| p.1).collect();
    spearman(&t, &v)
}

/// Intervals before the first model fit carry no horizon and are skipped.
pub fn adaptive_horizon_stats(rows: &[MetricsRow]) -> Result<HorizonSummary> {
    let intervals = finite_series(rows, |r| r.achieved_horizon_mean);
    if intervals.is_empty() {
        return Err(Error::param("the artifact has no achieved-horizon measurements"));
    }
    let values: Vec<f64> = intervals.iter().map(|p| p.1).collect();
    Ok(HorizonSummary {
        spearman: rank_trend(&intervals)?,
        mean: mean(&values).unwrap_or(f64::NAN),
        intervals,
    })
}

pub fn column_trend(rows: &[MetricsRow], column: impl Fn(&MetricsRow) -> f64) -> Result<Trend> {
    let series = finite_series(rows, column);
    let values: Vec<f64> = series.iter().map(|p| p.1).collect();
    Ok(Trend {
        points: series.len(),
        first: values.first().copied(),
        last: values.last().copied(),
        mean: mean(&values),
        spearman: rank_trend(&series)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub env: String,
    pub env_steps: usize,
    pub episodes: usize,
    pub intervals: usize,
    pub error: Option<String>,
    /// Mean episode return of the last interval that completed an episode.
    pub final_return: Option<f64>,
    pub evaluation: Evaluation,
    /// `None` when no interval planned.
    pub horizon: Option<HorizonSummary>,
    pub model_error: Trend,
    pub rows: Vec<MetricsRow>,
}

/// Loads and summarizes the artifact in `dir`.
pub fn build_report(dir: &Path) -> Result<RunReport> {
    let config_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    RunConfig::from_json_str(&text).map_err(|e| Error::Artifact {
        path: config_path.display().to_string(),
        message: e.to_string(),
    })?;
    let snapshot = Snapshot::read(&dir.join(SNAPSHOT_FILE))?;
    let rows = read_metrics(&dir.join(METRICS_FILE))?;
    let horizon = if finite_series(&rows, |r| r.achieved_horizon_mean).is_empty() {
        None
    } else {
        Some(adaptive_horizon_stats(&rows)?)
    };
    Ok(RunReport {
        env: snapshot.env,
        env_steps: snapshot.env_steps,
        episodes: snapshot.episodes,
        intervals: rows.len(),
        error: snapshot.error,
        final_return: finite_series(&rows, |r| r.episode_return_mean).last().map(|p| p.1),
        evaluation: snapshot.evaluation,
        horizon,
        model_error: column_trend(&rows, |r| r.model_error_l2_mean)?,
        rows,
    })
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), cell)
}

impl RunReport {
    /// Human-readable summary followed by the interval table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("env            {}\n", self.env));
        out.push_str(&format!("env steps      {} ({} episodes, {} intervals)\n", self.env_steps, self.episodes, self.intervals));
        if let Some(e) = &self.error {
            out.push_str(&format!("stopped early  {e}\n"));
        }
        out.push_str(&format!("final return   {}\n", opt(self.final_return)));
        let ev = &self.evaluation;
        for (name, v) in [
            ("stochastic", ev.stochastic_return),
            ("mean action", ev.mean_action_return),
            ("greedy", ev.greedy_return),
            ("optimal greedy", ev.optimal_greedy_return),
            ("soft optimum", ev.soft_optimal_value),
            ("relative gap", ev.relative_gap),
        ] {
            if v.is_some() {
                out.push_str(&format!("{name:<15}{}\n", opt(v)));
            }
        }
        match &self.horizon {
            Some(h) => out.push_str(&format!("horizon        mean {} spearman {}\n", cell(h.mean), opt(h.spearman))),
            None => out.push_str("horizon        -\n"),
        }
        let m = &self.model_error;
        out.push_str(&format!(
            "model error    first {} last {} spearman {}\n",
            opt(m.first),
            opt(m.last),
            opt(m.spearman)
        ));
        out.push_str("\nenv_step  return      horizon  model_err  critic     objective\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<9} {:<11} {:<8} {:<10} {:<10} {}\n",
                r.env_step,
                cell(r.episode_return_mean),
                cell(r.achieved_horizon_mean),
                cell(r.model_error_l2_mean),
                cell(r.critic_loss),
                cell(r.policy_objective)
            ));
        }
        out
    }

    pub fn to_json_string(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }
}

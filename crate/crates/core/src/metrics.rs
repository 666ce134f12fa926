//! Scoring utilities: pair-counting agreement between partitions,
//! censoring confusion tables, and jump-time error statistics.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::estimate::CohortEstimate;
use crate::pdmp::ModelParams;
use crate::simulate::Trajectory;
use crate::survival::SurvivalFit;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("partitions have different lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("partitions need at least 2 elements, got {0}")]
    TooShort(usize),
    #[error("trajectory {0} has no ground truth attached")]
    MissingTruth(String),
    #[error("estimate id {0} does not match any trajectory")]
    UnknownId(String),
    #[error("trajectories and estimates cover different id sets")]
    IdMismatch,
}

fn choose2(n: u64) -> f64 {
    (n * (n - 1)) as f64 / 2.0
}

struct PairCounts {
    same_same: f64,
    same_a: f64,
    same_b: f64,
    total: f64,
}

fn pair_counts(a: &[i8], b: &[i8]) -> Result<PairCounts, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < 2 {
        return Err(MetricsError::TooShort(a.len()));
    }
    let mut cells: HashMap<(i8, i8), u64> = HashMap::new();
    let mut rows: HashMap<i8, u64> = HashMap::new();
    let mut cols: HashMap<i8, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    Ok(PairCounts {
        same_same: cells.values().map(|&n| choose2(n)).sum(),
        same_a: rows.values().map(|&n| choose2(n)).sum(),
        same_b: cols.values().map(|&n| choose2(n)).sum(),
        total: choose2(a.len() as u64),
    })
}

/// Proportion of element pairs grouped together in both labelings or
/// separated in both.
pub fn rand_index(a: &[i8], b: &[i8]) -> Result<f64, MetricsError> {
    let c = pair_counts(a, b)?;
    Ok((c.total - c.same_a - c.same_b + 2.0 * c.same_same) / c.total)
}

fn same_partition(a: &[i8], b: &[i8]) -> bool {
    let mut fwd: HashMap<i8, i8> = HashMap::new();
    let mut bwd: HashMap<i8, i8> = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        *fwd.entry(x).or_insert(y) == y && *bwd.entry(y).or_insert(x) == x
    })
}

/// Rand index corrected for chance under the permutation model, ranging
/// from -0.5 (maximal disagreement) to 1 (identical partitions). When the
/// correction denominator vanishes (both partitions trivial) the value is
/// 1 if the partitions coincide and 0 otherwise.
pub fn adjusted_rand_index(a: &[i8], b: &[i8]) -> Result<f64, MetricsError> {
    let c = pair_counts(a, b)?;
    let expected = c.same_a * c.same_b / c.total;
    let maximum = (c.same_a + c.same_b) / 2.0;
    if maximum == expected {
        return Ok(if same_partition(a, b) { 1.0 } else { 0.0 });
    }
    Ok((c.same_same - expected) / (maximum - expected))
}

/// Counts over true censoring status (rows) against predicted censoring
/// status (columns). A trajectory is predicted censored when estimation
/// failed, no relapse time was found, or the relapse time lands beyond
/// the follow-up horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConfusionTable {
    pub censored_censored: f64,
    pub censored_relapse: f64,
    pub relapse_censored: f64,
    pub relapse_relapse: f64,
}

impl ConfusionTable {
    pub fn total(&self) -> f64 {
        self.censored_censored + self.censored_relapse + self.relapse_censored
            + self.relapse_relapse
    }

    /// Cells divided by the total, summing to 1.
    pub fn normalized(&self) -> ConfusionTable {
        let t = self.total();
        ConfusionTable {
            censored_censored: self.censored_censored / t,
            censored_relapse: self.censored_relapse / t,
            relapse_censored: self.relapse_censored / t,
            relapse_relapse: self.relapse_relapse / t,
        }
    }

    /// Fraction of truly censored trajectories predicted as relapsing;
    /// `None` when there are no truly censored trajectories.
    pub fn false_relapse_rate(&self) -> Option<f64> {
        let censored = self.censored_censored + self.censored_relapse;
        (censored > 0.0).then(|| self.censored_relapse / censored)
    }

    /// Fraction of truly relapsing trajectories predicted as relapsing;
    /// `None` when there are no truly relapsing trajectories.
    pub fn relapse_recall(&self) -> Option<f64> {
        let relapsed = self.relapse_censored + self.relapse_relapse;
        (relapsed > 0.0).then(|| self.relapse_relapse / relapsed)
    }
}

fn truth_map(
    trajs: &[Trajectory],
) -> Result<HashMap<&str, &crate::simulate::GroundTruth>, MetricsError> {
    trajs
        .iter()
        .map(|t| {
            t.truth
                .as_ref()
                .map(|g| (t.id.as_str(), g))
                .ok_or_else(|| MetricsError::MissingTruth(t.id.clone()))
        })
        .collect()
}

/// Whether an estimation outcome predicts censoring for the given horizon.
pub fn predicts_censoring(
    outcome: &Result<crate::estimate::JumpEstimate, crate::estimate::EstimateError>,
    horizon: f64,
) -> bool {
    match outcome {
        Ok(est) => est.t2_hat.is_none_or(|t2| t2 > horizon),
        Err(_) => true,
    }
}

/// Censoring confusion table for one batch; estimates are matched to
/// trajectories by id and both sides must cover the same ids.
pub fn confusion(
    trajs: &[Trajectory],
    estimates: &[CohortEstimate],
) -> Result<ConfusionTable, MetricsError> {
    let truths = truth_map(trajs)?;
    if estimates.len() != truths.len() {
        return Err(MetricsError::IdMismatch);
    }
    let mut table = ConfusionTable::default();
    for e in estimates {
        let truth = truths
            .get(e.id.as_str())
            .ok_or_else(|| MetricsError::UnknownId(e.id.clone()))?;
        let pred_censored = predicts_censoring(&e.outcome, truth.horizon);
        let cell = match (truth.censored, pred_censored) {
            (true, true) => &mut table.censored_censored,
            (true, false) => &mut table.censored_relapse,
            (false, true) => &mut table.relapse_censored,
            (false, false) => &mut table.relapse_relapse,
        };
        *cell += 1.0;
    }
    Ok(table)
}

/// Arithmetic mean of the normalized cells across batches.
pub fn average_confusion(tables: &[ConfusionTable]) -> ConfusionTable {
    let n = tables.len() as f64;
    let mut avg = ConfusionTable::default();
    for t in tables {
        let norm = t.normalized();
        avg.censored_censored += norm.censored_censored / n;
        avg.censored_relapse += norm.censored_relapse / n;
        avg.relapse_censored += norm.relapse_censored / n;
        avg.relapse_relapse += norm.relapse_relapse / n;
    }
    avg
}

/// Mean and standard deviation of a sample (sample standard deviation,
/// zero for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn from_samples(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Absolute jump-time errors over trajectories whose relapse truly
/// occurred and was predicted, plus relative parameter errors of the
/// fitted duration law when a fit is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorSummary {
    pub n_evaluated: usize,
    pub t1_abs: Stat,
    pub t2_abs: Stat,
    pub duration_abs: Stat,
    pub alpha_rel_error: Option<f64>,
    pub beta_rel_error: Option<f64>,
}

/// Raw per-trajectory absolute errors, restricted to trajectories whose
/// relapse truly occurred and was predicted inside the follow-up window.
/// Batches can be accumulated with [`ErrorSamples::extend`] before
/// summarizing, so a sweep never has to hold every cohort in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorSamples {
    pub t1_abs: Vec<f64>,
    pub t2_abs: Vec<f64>,
    pub duration_abs: Vec<f64>,
}

impl ErrorSamples {
    pub fn extend(&mut self, other: &ErrorSamples) {
        self.t1_abs.extend_from_slice(&other.t1_abs);
        self.t2_abs.extend_from_slice(&other.t2_abs);
        self.duration_abs.extend_from_slice(&other.duration_abs);
    }

    pub fn summarize(&self, fit: Option<&SurvivalFit>, params: &ModelParams) -> ErrorSummary {
        ErrorSummary {
            n_evaluated: self.t1_abs.len(),
            t1_abs: Stat::from_samples(&self.t1_abs),
            t2_abs: Stat::from_samples(&self.t2_abs),
            duration_abs: Stat::from_samples(&self.duration_abs),
            alpha_rel_error: fit.map(|f| (f.alpha_hat - params.alpha).abs() / params.alpha),
            beta_rel_error: fit.map(|f| (f.beta_hat - params.beta).abs() / params.beta),
        }
    }
}

pub fn error_samples(
    trajs: &[Trajectory],
    estimates: &[CohortEstimate],
) -> Result<ErrorSamples, MetricsError> {
    let truths = truth_map(trajs)?;
    let mut samples = ErrorSamples::default();
    for e in estimates {
        let truth = truths
            .get(e.id.as_str())
            .ok_or_else(|| MetricsError::UnknownId(e.id.clone()))?;
        if truth.censored {
            continue;
        }
        let Ok(est) = &e.outcome else { continue };
        let Some(t2_hat) = est.t2_hat.filter(|t2| *t2 <= truth.horizon) else {
            continue;
        };
        samples.t1_abs.push((est.t1_hat - truth.t1).abs());
        samples.t2_abs.push((t2_hat - truth.t2).abs());
        samples
            .duration_abs
            .push(((truth.t2 - truth.t1) - (t2_hat - est.t1_hat)).abs());
    }
    Ok(samples)
}

pub fn error_summary(
    trajs: &[Trajectory],
    estimates: &[CohortEstimate],
    fit: Option<&SurvivalFit>,
    params: &ModelParams,
) -> Result<ErrorSummary, MetricsError> {
    Ok(error_samples(trajs, estimates)?.summarize(fit, params))
}

/// Writes normalized confusion cells per setting
/// (`scenario,param_value,cell_tt,cell_tf,cell_ft,cell_ff`; rows are true
/// censored/relapse, columns predicted censored/relapse).
pub fn write_confusion_csv<W: Write>(
    writer: W,
    rows: &[(String, f64, ConfusionTable)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "scenario",
        "param_value",
        "cell_tt",
        "cell_tf",
        "cell_ft",
        "cell_ff",
    ])?;
    for (scenario, param_value, table) in rows {
        let t = table.normalized();
        out.serialize((
            scenario,
            param_value,
            t.censored_censored,
            t.censored_relapse,
            t.relapse_censored,
            t.relapse_relapse,
        ))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes error statistics per setting in long form
/// (`scenario,param_value,stat,mean,std`), with relative parameter errors
/// carried as mean-only rows.
pub fn write_error_summary_csv<W: Write>(
    writer: W,
    rows: &[(String, f64, ErrorSummary)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["scenario", "param_value", "stat", "mean", "std"])?;
    for (scenario, param_value, summary) in rows {
        for (name, stat) in [
            ("t1_abs_error", summary.t1_abs),
            ("t2_abs_error", summary.t2_abs),
            ("duration_abs_error", summary.duration_abs),
        ] {
            out.serialize((scenario, param_value, name, stat.mean, stat.std))?;
        }
        for (name, value) in [
            ("alpha_rel_error", summary.alpha_rel_error),
            ("beta_rel_error", summary.beta_rel_error),
        ] {
            if let Some(v) = value {
                out.serialize((scenario, param_value, name, v, None::<f64>))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes per-trajectory partition agreement scores
/// (`id,method,ri,ari`).
pub fn write_comparison_csv<W: Write>(
    writer: W,
    rows: &[(String, String, f64, f64)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["id", "method", "ri", "ari"])?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

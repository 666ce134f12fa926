//! Jump-time estimation from noisy discrete observations.
//!
//! The remission entry time is recovered by an iterative regression: for
//! each prefix length, a line is fitted to the log observations, the
//! implied threshold-crossing time splits the trajectory, and the combined
//! squared error of "exponential before the split, plateau after" is
//! scored on the original scale. The prefix with the smallest combined
//! error wins. The relapse time is recovered by the mirrored procedure on
//! the tail of the trajectory, fitting growing suffixes instead, with a
//! flatness screen that declares the trajectory censored when the tail
//! never rises convincingly above the plateau.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::Trajectory;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EstimateError {
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("no prefix produced a decaying fit crossing the threshold")]
    NoDecayFit,
    #[error("remission threshold must be positive, got {0}")]
    InvalidThreshold(String),
}

/// Result of the decay-side regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Estimated day the biomarker reaches the remission threshold.
    pub t1_hat: f64,
    /// Fitted decay rate (slope of the log-scale line, negative).
    pub v_minus_hat: f64,
    /// Fitted initial level (exp of the log-scale intercept).
    pub zeta0_hat: f64,
    /// Combined squared error of the winning split, original scale.
    pub fit_error: f64,
}

/// Result of the growth-side regression when a relapse is detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    /// Estimated day the relapse regime starts.
    pub t2_hat: f64,
    /// Fitted growth rate (slope of the log-scale line, positive).
    pub v_plus_hat: f64,
    /// Combined squared error of the winning tail split, original scale.
    pub fit_error: f64,
}

/// Jump-time estimates for one trajectory. A missing relapse time means
/// the trajectory was predicted censored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEstimate {
    pub t1_hat: f64,
    pub t2_hat: Option<f64>,
    pub v_minus_hat: f64,
    pub zeta0_hat: f64,
    pub v_plus_hat: Option<f64>,
    pub fit_error: f64,
}

impl JumpEstimate {
    pub fn censored_pred(&self) -> bool {
        self.t2_hat.is_none()
    }
}

/// Estimate paired with the trajectory it belongs to; failures are kept
/// per id so one bad series never aborts a batch.
#[derive(Debug, Clone)]
pub struct CohortEstimate {
    pub id: String,
    pub outcome: Result<JumpEstimate, EstimateError>,
}

/// Lower bound applied to observations before taking logs, so that noise
/// excursions to zero or below stay finite on the log scale.
pub fn floor_for_log(value: f64, zeta_r: f64) -> f64 {
    value.max((0.01 * zeta_r).max(1e-6))
}

fn check_threshold(zeta_r: f64) -> Result<(), EstimateError> {
    if zeta_r > 0.0 && zeta_r.is_finite() {
        Ok(())
    } else {
        Err(EstimateError::InvalidThreshold(format!("{zeta_r}")))
    }
}

/// Ordinary least squares of `ys` on `xs`; returns (intercept, slope).
fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - x_mean) * (y - y_mean);
        sxx += (x - x_mean) * (x - x_mean);
    }
    let slope = sxy / sxx;
    (y_mean - slope * x_mean, slope)
}

/// How many leading iterations may pass before a worsening combined error
/// is allowed to stop the sweep.
const MIN_SWEEP_LEN: usize = 15;

/// Decay-side pass: fits every prefix of length `3..=N`, keeps the prefix
/// whose implied split minimizes the combined squared error (later
/// prefixes win ties), and stops early once the error worsens after
/// iteration 15 with a usable crossing time.
pub fn estimate_t1(traj: &Trajectory, zeta_r: f64) -> Result<DecayFit, EstimateError> {
    check_threshold(zeta_r)?;
    let n = traj.len();
    if n < 3 {
        return Err(EstimateError::TooFewObservations(n));
    }
    let dates = &traj.dates;
    let values = &traj.values;
    let logs: Vec<f64> = values
        .iter()
        .map(|v| floor_for_log(*v, zeta_r).ln())
        .collect();
    let log_target = zeta_r.ln();

    let mut best: Option<DecayFit> = None;
    let mut best_delta = f64::INFINITY;
    for j in 3..=n {
        let (c0, c1) = ols_line(&dates[..j], &logs[..j]);
        let t1_cand = (log_target - c0) / c1;
        if !t1_cand.is_finite() || t1_cand <= 0.0 {
            continue;
        }
        let split = dates.partition_point(|d| *d <= t1_cand);
        let mut delta_tmp = 0.0;
        for i in 0..split {
            let fitted = (c0 + c1 * dates[i]).exp();
            delta_tmp += (values[i] - fitted).powi(2);
        }
        for value in &values[split..n] {
            delta_tmp += (value - zeta_r).powi(2);
        }
        if delta_tmp <= best_delta && c1 < 0.0 {
            best_delta = delta_tmp;
            best = Some(DecayFit {
                t1_hat: t1_cand,
                v_minus_hat: c1,
                zeta0_hat: c0.exp(),
                fit_error: delta_tmp,
            });
        } else if delta_tmp > best_delta && j > MIN_SWEEP_LEN {
            break;
        }
    }
    best.ok_or(EstimateError::NoDecayFit)
}

/// Exceedances required by the flatness screen; short tails are capped so
/// that a tail of length M can still qualify with M - 2 elevated points.
const SCREEN_COUNT: usize = 3;
/// Multiplier on the tail noise scale defining "elevated above plateau".
const SCREEN_Z: f64 = 2.0;

/// Growth-side pass on the observations after `t1_hat`. Returns the
/// winning suffix fit, or `None` when the tail is predicted censored:
/// too short, flat up to noise, no valid growing fit, or a winning fit
/// whose growth side is not convincingly above the plateau.
pub fn estimate_t2(traj: &Trajectory, t1_hat: f64, zeta_r: f64) -> Option<GrowthFit> {
    if check_threshold(zeta_r).is_err() {
        return None;
    }
    let start = traj.dates.partition_point(|d| *d <= t1_hat);
    let dates = &traj.dates[start..];
    let values = &traj.values[start..];
    let m = dates.len();
    if m < 3 {
        return None;
    }

    // Noise scale from the early tail, which is plateau under either
    // hypothesis; growth, when present, sits at the end.
    let half = m.div_ceil(2);
    let sigma_hat = (values[..half]
        .iter()
        .map(|y| (y - zeta_r).powi(2))
        .sum::<f64>()
        / half as f64)
        .sqrt();
    let threshold = zeta_r + SCREEN_Z * sigma_hat;

    let exceed = values.iter().filter(|y| **y > threshold).count();
    if exceed < SCREEN_COUNT.min(m - 2) {
        return None;
    }

    let logs: Vec<f64> = values
        .iter()
        .map(|v| floor_for_log(*v, zeta_r).ln())
        .collect();
    let log_target = zeta_r.ln();
    let d_last = *dates.last().unwrap();

    let mut best: Option<GrowthFit> = None;
    let mut best_delta = f64::INFINITY;
    for j in 3..=m {
        let lo = m - j;
        let (c0, c1) = ols_line(&dates[lo..], &logs[lo..]);
        let t2_cand = (log_target - c0) / c1;
        if c1 <= 0.0 || !t2_cand.is_finite() || t2_cand <= t1_hat || t2_cand > d_last {
            continue;
        }
        let split = dates.partition_point(|d| *d <= t2_cand);
        let mut delta_tmp = 0.0;
        for value in &values[..split] {
            delta_tmp += (value - zeta_r).powi(2);
        }
        for i in split..m {
            let fitted = (c0 + c1 * dates[i]).exp();
            delta_tmp += (values[i] - fitted).powi(2);
        }
        if delta_tmp <= best_delta {
            best_delta = delta_tmp;
            best = Some(GrowthFit {
                t2_hat: t2_cand,
                v_plus_hat: c1,
                fit_error: delta_tmp,
            });
        } else if j > MIN_SWEEP_LEN {
            break;
        }
    }
    let fit = best?;

    // Significance gates on the winner: the series must end elevated and
    // the growth side must hold enough elevated points of its own.
    if *values.last().unwrap() <= threshold {
        return None;
    }
    let growth_from = dates.partition_point(|d| *d <= fit.t2_hat);
    let growth = &values[growth_from..];
    if growth.is_empty() {
        return None;
    }
    let growth_exceed = growth.iter().filter(|y| **y > threshold).count();
    if growth_exceed < SCREEN_COUNT.min(growth.len()) {
        return None;
    }
    Some(fit)
}

/// Runs both passes on one trajectory. `fit_error` is the sum of the
/// winning combined errors of the two passes.
pub fn estimate_trajectory(traj: &Trajectory, zeta_r: f64) -> Result<JumpEstimate, EstimateError> {
    let decay = estimate_t1(traj, zeta_r)?;
    let growth = estimate_t2(traj, decay.t1_hat, zeta_r);
    Ok(JumpEstimate {
        t1_hat: decay.t1_hat,
        t2_hat: growth.map(|g| g.t2_hat),
        v_minus_hat: decay.v_minus_hat,
        zeta0_hat: decay.zeta0_hat,
        v_plus_hat: growth.map(|g| g.v_plus_hat),
        fit_error: decay.fit_error + growth.map_or(0.0, |g| g.fit_error),
    })
}

/// Element-wise estimation over a cohort; order is preserved and failures
/// are recorded per id instead of aborting.
pub fn estimate_cohort(trajectories: &[Trajectory], zeta_r: f64) -> Vec<CohortEstimate> {
    trajectories
        .par_iter()
        .map(|t| CohortEstimate {
            id: t.id.clone(),
            outcome: estimate_trajectory(t, zeta_r),
        })
        .collect()
}

/// Serialized row of the estimates table.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimateRow {
    id: String,
    #[serde(rename = "T1_hat")]
    t1_hat: f64,
    #[serde(rename = "T2_hat")]
    t2_hat: Option<f64>,
    censored_pred: u8,
    v_minus_hat: f64,
    v_plus_hat: Option<f64>,
    fit_error: f64,
}

/// Writes successful estimates as CSV
/// (`id,T1_hat,T2_hat,censored_pred,v_minus_hat,v_plus_hat,fit_error`);
/// relapse fields are left empty on censored rows.
pub fn write_estimates_csv<W: Write>(
    writer: W,
    estimates: &[CohortEstimate],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    for e in estimates {
        if let Ok(est) = &e.outcome {
            out.serialize(EstimateRow {
                id: e.id.clone(),
                t1_hat: est.t1_hat,
                t2_hat: est.t2_hat,
                censored_pred: est.censored_pred() as u8,
                v_minus_hat: est.v_minus_hat,
                v_plus_hat: est.v_plus_hat,
                fit_error: est.fit_error,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes the failure sidecar (`id,reason`), one row per trajectory whose
/// estimation failed.
pub fn write_failures_csv<W: Write>(
    writer: W,
    estimates: &[CohortEstimate],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["id", "reason"])?;
    for e in estimates {
        if let Err(err) = &e.outcome {
            out.write_record([e.id.as_str(), &err.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads an estimates CSV back into per-id estimates.
pub fn read_estimates_csv<R: std::io::Read>(
    reader: R,
) -> Result<Vec<(String, JumpEstimate)>, csv::Error> {
    let mut input = csv::Reader::from_reader(reader);
    let mut result = Vec::new();
    for row in input.deserialize() {
        let row: EstimateRow = row?;
        result.push((
            row.id,
            JumpEstimate {
                t1_hat: row.t1_hat,
                t2_hat: row.t2_hat,
                v_minus_hat: row.v_minus_hat,
                zeta0_hat: f64::NAN,
                v_plus_hat: row.v_plus_hat,
                fit_error: row.fit_error,
            },
        ));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdmp::ModelParams;
    use crate::simulate::{initial_conditions, path_seed, simulate_trajectory};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn traj(dates: Vec<f64>, values: Vec<f64>) -> Trajectory {
        Trajectory::new("t", dates, values, None).unwrap()
    }

    #[test]
    fn exact_decay_prefix_is_recovered_by_hand_ols() {
        let e = std::f64::consts::E;
        let t = traj(
            vec![0.0, 1.0, 2.0, 3.0, 4.0],
            vec![e * e, e, 1.0, 1.0, 1.0],
        );
        let fit = estimate_t1(&t, 1.0).unwrap();
        assert_abs_diff_eq!(fit.t1_hat, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.v_minus_hat, -1.0, epsilon = 1e-9);
        assert_relative_eq!(fit.zeta0_hat, e * e, max_relative = 1e-9);
        assert_abs_diff_eq!(fit.fit_error, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn exact_growth_tail_is_recovered_by_hand_ols() {
        let e = std::f64::consts::E;
        let t = traj(
            vec![10.0, 11.0, 12.0, 13.0],
            vec![1.0, 1.0, e, e * e],
        );
        let fit = estimate_t2(&t, 9.5, 1.0).unwrap();
        assert_abs_diff_eq!(fit.t2_hat, 11.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.v_plus_hat, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.fit_error, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn flat_noiseless_tail_is_predicted_censored() {
        let dates: Vec<f64> = (0..20).map(|k| k as f64 * 30.0).collect();
        let mut values = vec![30.0, 10.0, 3.0];
        values.extend(std::iter::repeat_n(1.0, 17));
        let t = traj(dates, values);
        let fit = estimate_t1(&t, 1.0).unwrap();
        assert!(estimate_t2(&t, fit.t1_hat, 1.0).is_none());
    }

    #[test]
    fn tail_shorter_than_three_points_is_predicted_censored() {
        let t = traj(vec![0.0, 30.0, 60.0, 90.0], vec![30.0, 10.0, 3.0, 1.0]);
        assert!(estimate_t2(&t, 70.0, 1.0).is_none());
    }

    #[test]
    fn noiseless_simulated_relapser_is_recovered() {
        let params = ModelParams {
            sigma: 0.0,
            ..ModelParams::default()
        };
        // Find a relapsing draw with a long observed growth phase.
        let mut found = None;
        for i in 0..200 {
            let (zeta0, horizon) = initial_conditions(3, 0, i, &params);
            let t =
                simulate_trajectory(&params, zeta0, horizon, path_seed(3, 0, i), "x").unwrap();
            let truth = t.truth.unwrap();
            if !truth.censored && truth.horizon - truth.t2 > 200.0 {
                found = Some(t);
                break;
            }
        }
        let t = found.expect("no relapser found in 200 draws");
        let truth = t.truth.unwrap();
        let est = estimate_trajectory(&t, params.zeta_r).unwrap();
        assert!((est.t1_hat - truth.t1).abs() < params.delta);
        assert_relative_eq!(est.v_minus_hat, params.v_minus, max_relative = 1e-9);
        let t2_hat = est.t2_hat.expect("relapse not detected");
        assert!((t2_hat - truth.t2).abs() < 1e-6);
        assert_relative_eq!(est.v_plus_hat.unwrap(), params.v_plus, max_relative = 1e-6);
    }

    #[test]
    fn rejects_short_or_never_decaying_series() {
        let t = traj(vec![0.0, 1.0], vec![10.0, 5.0]);
        assert_eq!(
            estimate_t1(&t, 1.0),
            Err(EstimateError::TooFewObservations(2))
        );
        let rising = traj(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(estimate_t1(&rising, 1.0), Err(EstimateError::NoDecayFit));
        assert!(estimate_t1(&rising, -1.0).is_err());
    }

    #[test]
    fn negative_observations_are_floored_not_fatal() {
        let t = traj(
            vec![0.0, 30.0, 60.0, 90.0, 120.0, 150.0],
            vec![30.0, 8.0, 2.0, -0.5, 0.8, 1.2],
        );
        let fit = estimate_t1(&t, 1.0).unwrap();
        assert!(fit.t1_hat > 0.0 && fit.v_minus_hat < 0.0);
    }

    #[test]
    fn time_shift_moves_both_estimates_by_the_shift() {
        let params = ModelParams {
            sigma: 0.5,
            ..ModelParams::default()
        };
        let (zeta0, _) = initial_conditions(9, 0, 4, &params);
        let base = simulate_trajectory(&params, zeta0, 1500.0, path_seed(9, 0, 4), "x").unwrap();
        let est = estimate_trajectory(&base, params.zeta_r).unwrap();

        let shift = 250.0;
        let shifted = Trajectory::new(
            "x",
            base.dates.iter().map(|d| d + shift).collect(),
            base.values.clone(),
            None,
        )
        .unwrap();
        let est_shifted = estimate_trajectory(&shifted, params.zeta_r).unwrap();
        assert_relative_eq!(est_shifted.t1_hat, est.t1_hat + shift, max_relative = 1e-6);
        match (est.t2_hat, est_shifted.t2_hat) {
            (Some(a), Some(b)) => assert_relative_eq!(b, a + shift, max_relative = 1e-6),
            (None, None) => {}
            other => panic!("censoring prediction changed under shift: {other:?}"),
        }
    }

    #[test]
    fn cohort_estimation_keeps_order_and_records_failures() {
        let good = traj(
            (0..12).map(|k| k as f64 * 30.0).collect(),
            vec![
                30.0, 8.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
            ],
        );
        let mut bad = traj(vec![0.0, 30.0], vec![5.0, 4.0]);
        bad.id = "bad".into();
        let mut good = good;
        good.id = "good".into();
        let out = estimate_cohort(&[good, bad], 1.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].id, "good");
        assert!(out[0].outcome.is_ok());
        assert_eq!(out[1].id, "bad");
        assert!(out[1].outcome.is_err());
    }

    #[test]
    fn estimates_csv_round_trips() {
        let estimates = vec![
            CohortEstimate {
                id: "a".into(),
                outcome: Ok(JumpEstimate {
                    t1_hat: 61.25,
                    t2_hat: Some(803.5),
                    v_minus_hat: -0.044,
                    zeta0_hat: 33.1,
                    v_plus_hat: Some(0.0118),
                    fit_error: 12.5,
                }),
            },
            CohortEstimate {
                id: "b".into(),
                outcome: Ok(JumpEstimate {
                    t1_hat: 70.0,
                    t2_hat: None,
                    v_minus_hat: -0.05,
                    zeta0_hat: 20.0,
                    v_plus_hat: None,
                    fit_error: 3.25,
                }),
            },
            CohortEstimate {
                id: "c".into(),
                outcome: Err(EstimateError::NoDecayFit),
            },
        ];
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &estimates).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,T1_hat,T2_hat,censored_pred,v_minus_hat,v_plus_hat,fit_error"));
        assert!(text.contains("b,70.0,,1,-0.05,,3.25"));

        let back = read_estimates_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a");
        assert_eq!(back[0].1.t2_hat, Some(803.5));
        assert_eq!(back[1].1.t2_hat, None);

        let mut fail_buf = Vec::new();
        write_failures_csv(&mut fail_buf, &estimates).unwrap();
        let fail_text = String::from_utf8(fail_buf).unwrap();
        assert!(fail_text.starts_with("id,reason"));
        assert!(fail_text.contains("c,"));
    }
}

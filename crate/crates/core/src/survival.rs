//! Censored survival fitting for remission durations.
//!
//! The relapse-time law is fitted by maximum likelihood on right-censored
//! durations. For a fixed Weibull shape the scale has a closed-form
//! optimum, so the fit reduces to a one-dimensional root-finding problem
//! on the profile score, solved by bracketing and bisection in log shape.
//! A Kaplan-Meier estimator with Greenwood pointwise bands is provided for
//! nonparametric comparison plots.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::CohortEstimate;
use crate::simulate::Trajectory;

#[derive(Debug, Error)]
pub enum SurvivalError {
    #[error("no samples provided")]
    NoSamples,
    #[error("all durations are censored; the shape is not identifiable")]
    NoEvents,
    #[error("sample {index} has non-positive or non-finite duration {duration}")]
    InvalidDuration { index: usize, duration: f64 },
}

/// One follow-up record: days observed and whether the event (relapse)
/// was seen rather than censored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalSample {
    pub duration: f64,
    pub event: bool,
}

impl SurvivalSample {
    pub fn event(duration: f64) -> Self {
        SurvivalSample {
            duration,
            event: true,
        }
    }

    pub fn censored(duration: f64) -> Self {
        SurvivalSample {
            duration,
            event: false,
        }
    }
}

/// Fitted Weibull parameters for the remission-duration law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub log_likelihood: f64,
    pub n_events: usize,
    pub n_censored: usize,
    pub converged: bool,
}

fn validate(samples: &[SurvivalSample]) -> Result<usize, SurvivalError> {
    if samples.is_empty() {
        return Err(SurvivalError::NoSamples);
    }
    for (index, s) in samples.iter().enumerate() {
        if s.duration <= 0.0 || !s.duration.is_finite() {
            return Err(SurvivalError::InvalidDuration {
                index,
                duration: s.duration,
            });
        }
    }
    let n_events = samples.iter().filter(|s| s.event).count();
    if n_events == 0 {
        return Err(SurvivalError::NoEvents);
    }
    Ok(n_events)
}

/// Right-censored Weibull log likelihood: density terms for events,
/// survival terms for censored records.
pub fn censored_log_likelihood(samples: &[SurvivalSample], alpha: f64, beta: f64) -> f64 {
    let log_beta = beta.ln();
    let mut ll = 0.0;
    for s in samples {
        let z = (alpha * (s.duration.ln() - log_beta)).exp();
        if s.event {
            ll += alpha.ln() - alpha * log_beta + (alpha - 1.0) * s.duration.ln() - z;
        } else {
            ll -= z;
        }
    }
    ll
}

/// Scale maximizing the censored likelihood for a fixed shape:
/// `(sum of duration^alpha over all records / number of events)^(1/alpha)`.
/// Computed against the largest duration to stay finite for any shape.
pub fn profile_scale(samples: &[SurvivalSample], alpha: f64) -> f64 {
    let t_max = samples.iter().map(|s| s.duration).fold(0.0, f64::max);
    let n_events = samples.iter().filter(|s| s.event).count();
    let scaled_sum: f64 = samples
        .iter()
        .map(|s| (alpha * (s.duration / t_max).ln()).exp())
        .sum();
    t_max * (scaled_sum / n_events as f64).powf(1.0 / alpha)
}

/// Derivative of the profiled log likelihood in the shape; strictly
/// decreasing, so its root is the maximum-likelihood shape.
fn profile_score(samples: &[SurvivalSample], alpha: f64, n_events: f64) -> f64 {
    let t_max = samples.iter().map(|s| s.duration).fold(0.0, f64::max);
    let log_t_max = t_max.ln();
    let mut weighted = 0.0;
    let mut total = 0.0;
    let mut event_logs = 0.0;
    for s in samples {
        let log_r = s.duration.ln() - log_t_max;
        let w = (alpha * log_r).exp();
        weighted += w * log_r;
        total += w;
        if s.event {
            event_logs += s.duration.ln();
        }
    }
    n_events / alpha + event_logs - n_events * (log_t_max + weighted / total)
}

const FIT_MAX_ITERATIONS: usize = 200;
const FIT_RELATIVE_TOL: f64 = 1e-8;
const SHAPE_LOWER: f64 = 1e-4;
const SHAPE_UPPER: f64 = 1e4;

/// Maximum-likelihood Weibull fit for right-censored durations.
///
/// Starts the shape search at 1, brackets the profile-score root
/// geometrically, then bisects in log shape until the relative change
/// drops below 1e-8. If the score has no root in a wide shape range
/// (degenerate data such as identical event times), the fit at the range
/// edge is returned with `converged` unset.
pub fn fit_weibull_censored(samples: &[SurvivalSample]) -> Result<SurvivalFit, SurvivalError> {
    let n_events = validate(samples)?;
    let n_events_f = n_events as f64;
    let iterations = std::cell::Cell::new(0usize);

    let score_at = |alpha: f64| {
        iterations.set(iterations.get() + 1);
        profile_score(samples, alpha, n_events_f)
    };

    let mut lo = 1.0;
    let mut hi = 1.0;
    let s0 = score_at(1.0);
    let mut converged = true;
    if s0 > 0.0 {
        // Root lies above; raise the upper edge until the score flips.
        while score_at(hi) > 0.0 {
            hi *= 2.0;
            if hi > SHAPE_UPPER || iterations.get() >= FIT_MAX_ITERATIONS {
                converged = false;
                break;
            }
        }
        lo = hi / 2.0;
    } else if s0 < 0.0 {
        while score_at(lo) < 0.0 {
            lo /= 2.0;
            if lo < SHAPE_LOWER || iterations.get() >= FIT_MAX_ITERATIONS {
                converged = false;
                break;
            }
        }
        hi = lo * 2.0;
    } else {
        lo = 1.0;
        hi = 1.0;
    }

    let alpha_hat = if !converged {
        if s0 > 0.0 {
            hi
        } else {
            lo
        }
    } else {
        let mut log_lo = lo.ln();
        let mut log_hi = hi.ln();
        loop {
            let mid = ((log_lo + log_hi) / 2.0).exp();
            if (log_hi - log_lo).abs() < FIT_RELATIVE_TOL {
                break mid;
            }
            if iterations.get() >= FIT_MAX_ITERATIONS {
                converged = false;
                break mid;
            }
            if score_at(mid) > 0.0 {
                log_lo = mid.ln();
            } else {
                log_hi = mid.ln();
            }
        }
    };

    let beta_hat = profile_scale(samples, alpha_hat);
    Ok(SurvivalFit {
        alpha_hat,
        beta_hat,
        log_likelihood: censored_log_likelihood(samples, alpha_hat, beta_hat),
        n_events,
        n_censored: samples.len() - n_events,
        converged,
    })
}

/// One step of the Kaplan-Meier curve, reported at an event time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KmPoint {
    pub time: f64,
    pub survival: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub at_risk: usize,
    pub events: usize,
}

/// Product-limit survival estimate with Greenwood 95% pointwise bands.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve {
    pub points: Vec<KmPoint>,
}

impl KmCurve {
    /// Step-function value at `t` (right-continuous, 1 before the first
    /// event time).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.time <= t)
            .last()
            .map_or(1.0, |p| p.survival)
    }
}

/// Kaplan-Meier estimator over the distinct event times of the sample.
/// Records censored at an event time are still at risk for it.
pub fn kaplan_meier(samples: &[SurvivalSample]) -> Result<KmCurve, SurvivalError> {
    if samples.is_empty() {
        return Err(SurvivalError::NoSamples);
    }
    for (index, s) in samples.iter().enumerate() {
        if s.duration <= 0.0 || !s.duration.is_finite() {
            return Err(SurvivalError::InvalidDuration {
                index,
                duration: s.duration,
            });
        }
    }
    let mut sorted: Vec<&SurvivalSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.duration.total_cmp(&b.duration));

    let mut points = Vec::new();
    let mut survival = 1.0;
    let mut greenwood = 0.0;
    let mut at_risk = sorted.len();
    let mut i = 0;
    while i < sorted.len() {
        let time = sorted[i].duration;
        let mut events = 0;
        let mut leaving = 0;
        while i < sorted.len() && sorted[i].duration == time {
            events += sorted[i].event as usize;
            leaving += 1;
            i += 1;
        }
        if events > 0 {
            let n = at_risk as f64;
            let d = events as f64;
            survival *= 1.0 - d / n;
            let (ci_low, ci_high) = if at_risk > events {
                greenwood += d / (n * (n - d));
                let se = survival * greenwood.sqrt();
                (
                    (survival - 1.96 * se).max(0.0),
                    (survival + 1.96 * se).min(1.0),
                )
            } else {
                // The risk set is exhausted: the curve hits zero exactly.
                (0.0, 0.0)
            };
            points.push(KmPoint {
                time,
                survival,
                ci_low,
                ci_high,
                at_risk,
                events,
            });
        }
        at_risk -= leaving;
    }
    Ok(KmCurve { points })
}

/// Writes a Kaplan-Meier curve as CSV
/// (`time,survival,ci_low,ci_high,at_risk,events`).
pub fn write_km_csv<W: Write>(writer: W, curve: &KmCurve) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    for p in &curve.points {
        out.serialize(p)?;
    }
    if curve.points.is_empty() {
        out.write_record(["time", "survival", "ci_low", "ci_high", "at_risk", "events"])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a fit as pretty JSON with a trailing newline.
pub fn write_fit_json<W: Write>(mut writer: W, fit: &SurvivalFit) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut writer, fit)?;
    writer.write_all(b"\n")
}

/// Builds survival samples from jump estimates: the remission duration for
/// predicted relapsers, the time from remission entry to the last visit for
/// predicted censored. Records with non-positive duration (or failed
/// estimation) are dropped; the count of dropped records is returned.
pub fn samples_from_estimates(
    estimates: &[CohortEstimate],
    cohort: &[Trajectory],
) -> (Vec<SurvivalSample>, usize) {
    use std::collections::HashMap;
    let last_date: HashMap<&str, f64> = cohort
        .iter()
        .map(|t| (t.id.as_str(), *t.dates.last().unwrap()))
        .collect();
    let mut samples = Vec::new();
    let mut dropped = 0usize;
    for e in estimates {
        let est = match &e.outcome {
            Ok(est) => est,
            Err(_) => {
                dropped += 1;
                continue;
            }
        };
        let sample = match est.t2_hat {
            Some(t2) => SurvivalSample::event(t2 - est.t1_hat),
            None => match last_date.get(e.id.as_str()) {
                Some(end) => SurvivalSample::censored(end - est.t1_hat),
                None => {
                    dropped += 1;
                    continue;
                }
            },
        };
        if sample.duration > 0.0 {
            samples.push(sample);
        } else {
            dropped += 1;
        }
    }
    (samples, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::JumpEstimate;
    use crate::pdmp::weibull_quantile;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn profile_scale_identity_for_constant_durations() {
        let samples: Vec<SurvivalSample> = (0..7).map(|_| SurvivalSample::event(5.0)).collect();
        assert_relative_eq!(profile_scale(&samples, 1.0), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn fit_recovers_a_quantile_grid() {
        let n = 400;
        let samples: Vec<SurvivalSample> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                SurvivalSample::event(weibull_quantile(p, 2.0, 10.0))
            })
            .collect();
        let fit = fit_weibull_censored(&samples).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.alpha_hat, 2.0, max_relative = 0.05);
        assert_relative_eq!(fit.beta_hat, 10.0, max_relative = 0.02);
        assert!(fit.log_likelihood.is_finite());
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let base: Vec<SurvivalSample> = (0..60)
            .map(|i| {
                let p = (i as f64 + 0.5) / 80.0;
                let d = weibull_quantile(p, 1.4, 7.0);
                if i % 4 == 0 {
                    SurvivalSample::censored(d)
                } else {
                    SurvivalSample::event(d)
                }
            })
            .collect();
        let scaled: Vec<SurvivalSample> = base
            .iter()
            .map(|s| SurvivalSample {
                duration: s.duration * 365.0,
                event: s.event,
            })
            .collect();
        let f1 = fit_weibull_censored(&base).unwrap();
        let f2 = fit_weibull_censored(&scaled).unwrap();
        assert_relative_eq!(f1.alpha_hat, f2.alpha_hat, max_relative = 1e-7);
        assert_relative_eq!(f1.beta_hat * 365.0, f2.beta_hat, max_relative = 1e-7);
    }

    #[test]
    fn censoring_shifts_the_fit_upward() {
        // Treating event times as censored must raise the fitted scale.
        let events: Vec<SurvivalSample> = (0..50)
            .map(|i| SurvivalSample::event(weibull_quantile((i as f64 + 0.5) / 50.0, 3.0, 100.0)))
            .collect();
        let mixed: Vec<SurvivalSample> = events
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if i % 2 == 0 {
                    SurvivalSample::censored(s.duration)
                } else {
                    *s
                }
            })
            .collect();
        let f_events = fit_weibull_censored(&events).unwrap();
        let f_mixed = fit_weibull_censored(&mixed).unwrap();
        assert!(f_mixed.beta_hat > f_events.beta_hat);
        assert_eq!(f_mixed.n_censored, 25);
    }

    #[test]
    fn degenerate_identical_events_do_not_converge() {
        let samples: Vec<SurvivalSample> = (0..10).map(|_| SurvivalSample::event(3.0)).collect();
        let fit = fit_weibull_censored(&samples).unwrap();
        assert!(!fit.converged);
        assert!(fit.alpha_hat >= SHAPE_UPPER / 2.0);
    }

    #[test]
    fn rejects_empty_all_censored_and_bad_durations() {
        assert!(matches!(
            fit_weibull_censored(&[]),
            Err(SurvivalError::NoSamples)
        ));
        let censored: Vec<SurvivalSample> =
            (0..5).map(|i| SurvivalSample::censored(1.0 + i as f64)).collect();
        assert!(matches!(
            fit_weibull_censored(&censored),
            Err(SurvivalError::NoEvents)
        ));
        let bad = vec![SurvivalSample::event(-2.0)];
        assert!(matches!(
            fit_weibull_censored(&bad),
            Err(SurvivalError::InvalidDuration { index: 0, .. })
        ));
    }

    #[test]
    fn km_single_subject_steps_to_zero() {
        let curve = kaplan_meier(&[SurvivalSample::event(4.0)]).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].survival, 0.0);
        assert_eq!(curve.survival_at(3.9), 1.0);
        assert_eq!(curve.survival_at(4.0), 0.0);
    }

    #[test]
    fn km_two_subjects_halve_then_zero() {
        let curve =
            kaplan_meier(&[SurvivalSample::event(2.0), SurvivalSample::event(5.0)]).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_abs_diff_eq!(curve.points[0].survival, 0.5);
        assert_eq!(curve.points[0].at_risk, 2);
        assert_abs_diff_eq!(curve.points[1].survival, 0.0);
        assert_eq!(curve.points[1].at_risk, 1);
    }

    #[test]
    fn km_all_censored_is_flat_one() {
        let samples: Vec<SurvivalSample> =
            (1..6).map(|i| SurvivalSample::censored(i as f64)).collect();
        let curve = kaplan_meier(&samples).unwrap();
        assert!(curve.points.is_empty());
        assert_eq!(curve.survival_at(100.0), 1.0);
    }

    #[test]
    fn km_is_monotone_with_bands_in_unit_interval() {
        let samples: Vec<SurvivalSample> = (0..200)
            .map(|i| {
                let d = weibull_quantile((i as f64 + 0.5) / 220.0, 1.3, 40.0);
                if i % 3 == 0 {
                    SurvivalSample::censored(d)
                } else {
                    SurvivalSample::event(d)
                }
            })
            .collect();
        let curve = kaplan_meier(&samples).unwrap();
        let mut last = 1.0;
        for p in &curve.points {
            assert!(p.survival <= last + 1e-12);
            assert!(p.ci_low <= p.survival && p.survival <= p.ci_high);
            assert!((0.0..=1.0).contains(&p.ci_low) && (0.0..=1.0).contains(&p.ci_high));
            last = p.survival;
        }
    }

    #[test]
    fn km_matches_empirical_survival_without_censoring() {
        let durations = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let samples: Vec<SurvivalSample> =
            durations.iter().map(|d| SurvivalSample::event(*d)).collect();
        let curve = kaplan_meier(&samples).unwrap();
        for t in [0.5, 1.0, 3.5, 9.0] {
            let empirical =
                durations.iter().filter(|d| **d > t).count() as f64 / durations.len() as f64;
            assert_abs_diff_eq!(curve.survival_at(t), empirical, epsilon = 1e-12);
        }
    }

    #[test]
    fn km_csv_has_expected_shape() {
        let curve =
            kaplan_meier(&[SurvivalSample::event(2.0), SurvivalSample::censored(3.0)]).unwrap();
        let mut buf = Vec::new();
        write_km_csv(&mut buf, &curve).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "time,survival,ci_low,ci_high,at_risk,events"
        );
        assert!(lines.next().unwrap().starts_with("2.0,0.5,"));
    }

    #[test]
    fn samples_are_built_from_estimates_with_drops() {
        use crate::estimate::EstimateError;
        let cohort = vec![
            Trajectory::new("a", vec![0.0, 30.0, 900.0], vec![30.0, 5.0, 1.0], None).unwrap(),
            Trajectory::new("b", vec![0.0, 30.0, 600.0], vec![30.0, 5.0, 1.0], None).unwrap(),
            Trajectory::new("c", vec![0.0, 30.0, 400.0], vec![30.0, 5.0, 1.0], None).unwrap(),
        ];
        let estimate = |t1, t2: Option<f64>| JumpEstimate {
            t1_hat: t1,
            t2_hat: t2,
            v_minus_hat: -0.05,
            zeta0_hat: 30.0,
            v_plus_hat: t2.map(|_| 0.01),
            fit_error: 1.0,
        };
        let estimates = vec![
            CohortEstimate {
                id: "a".into(),
                outcome: Ok(estimate(60.0, Some(500.0))),
            },
            CohortEstimate {
                id: "b".into(),
                outcome: Ok(estimate(70.0, None)),
            },
            CohortEstimate {
                id: "c".into(),
                outcome: Err(EstimateError::NoDecayFit),
            },
        ];
        let (samples, dropped) = samples_from_estimates(&estimates, &cohort);
        assert_eq!(dropped, 1);
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0], SurvivalSample::event(440.0));
        assert_eq!(samples[1], SurvivalSample::censored(530.0));
    }
}

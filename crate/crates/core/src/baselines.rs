//! Comparison methods that partition a trajectory into the three regimes
//! without modeling the jump times directly.
//!
//! Both methods work on the log-difference signal of consecutive
//! observations, where decay shows as a positive level, the plateau as
//! zero, and growth as a negative level. Change-point detection minimizes
//! the within-segment quadratic loss exactly by dynamic programming; the
//! hidden Markov model constrains its transitions to the known forward
//! regime order and is fitted per trajectory by expectation-maximization.

use std::io::Write;

use thiserror::Error;

use crate::estimate::floor_for_log;
use crate::simulate::Trajectory;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("signal of length {len} is too short; need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("segment count {k} cannot be mapped onto three modes")]
    TooManySegments { k: usize },
    #[error("mode labels must be in {{-1, 0, 1}} and non-decreasing")]
    InvalidLabels,
}

/// Log differences of consecutive observations, one per adjacent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSignal {
    pub values: Vec<f64>,
}

/// Per-observation regime labels in {-1, 0, 1}, non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePartition {
    pub labels: Vec<i8>,
}

impl ModePartition {
    pub fn new(labels: Vec<i8>) -> Result<Self, BaselineError> {
        let ok = labels.iter().all(|l| matches!(l, -1..=1))
            && labels.windows(2).all(|w| w[0] <= w[1]);
        if ok {
            Ok(ModePartition { labels })
        } else {
            Err(BaselineError::InvalidLabels)
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Labels each visit date by its position relative to the jump times:
/// -1 before `t1`, 0 on [`t1`, `t2`], 1 after `t2` (never 1 when `t2` is
/// absent).
pub fn partition_from_jumps(dates: &[f64], t1: f64, t2: Option<f64>) -> ModePartition {
    let labels = dates
        .iter()
        .map(|&d| {
            if d < t1 {
                -1
            } else if t2.is_none_or(|t2| d <= t2) {
                0
            } else {
                1
            }
        })
        .collect();
    ModePartition { labels }
}

/// `log(y_i) - log(y_{i+1})` over consecutive observations, with the same
/// flooring as the jump estimator so zero or negative values stay finite.
pub fn diff_signal(traj: &Trajectory, zeta_r: f64) -> Result<DiffSignal, BaselineError> {
    if traj.len() < 2 {
        return Err(BaselineError::SignalTooShort {
            len: traj.len(),
            needed: 2,
        });
    }
    let logs: Vec<f64> = traj
        .values
        .iter()
        .map(|&y| floor_for_log(y, zeta_r).ln())
        .collect();
    let values = logs.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(DiffSignal { values })
}

/// Prefix sums giving each segment's sum of squared deviations from its
/// mean in constant time.
struct SegmentCost {
    prefix: Vec<f64>,
    prefix_sq: Vec<f64>,
}

impl SegmentCost {
    fn new(signal: &[f64]) -> Self {
        let mut prefix = Vec::with_capacity(signal.len() + 1);
        let mut prefix_sq = Vec::with_capacity(signal.len() + 1);
        prefix.push(0.0);
        prefix_sq.push(0.0);
        for &s in signal {
            prefix.push(prefix.last().unwrap() + s);
            prefix_sq.push(prefix_sq.last().unwrap() + s * s);
        }
        SegmentCost { prefix, prefix_sq }
    }

    /// Quadratic loss of the half-open segment `[i, j)`.
    fn cost(&self, i: usize, j: usize) -> f64 {
        let n = (j - i) as f64;
        let sum = self.prefix[j] - self.prefix[i];
        let sum_sq = self.prefix_sq[j] - self.prefix_sq[i];
        sum_sq - sum * sum / n
    }
}

/// Exact minimum-quadratic-loss segmentation into `k + 1` contiguous
/// non-empty segments. Returns the segment start indices after the first
/// (the breakpoints, ascending) and the optimal total loss. Ties are
/// broken toward the earliest breakpoint vector.
pub fn segment_dp(signal: &[f64], k: usize) -> Result<(Vec<usize>, f64), BaselineError> {
    let n = signal.len();
    if n < k + 1 {
        return Err(BaselineError::SignalTooShort { len: n, needed: k + 1 });
    }
    let cost = SegmentCost::new(signal);
    // best[segs][i] = optimal loss of covering signal[i..] with `segs`
    // segments. Filling from the suffix lets the reconstruction walk
    // forward and take the first split attaining each optimum, which is
    // the lexicographically earliest breakpoint vector.
    let segs_total = k + 1;
    let mut best = vec![vec![f64::INFINITY; n + 1]; segs_total + 1];
    for (i, slot) in best[1].iter_mut().enumerate().take(n) {
        *slot = cost.cost(i, n);
    }
    for segs in 2..=segs_total {
        let (done, todo) = best.split_at_mut(segs);
        let prev = &done[segs - 1];
        // Leave room for segs - 1 more non-empty segments after the split.
        for (i, slot) in todo[0].iter_mut().enumerate().take(n - segs + 1) {
            let mut acc = f64::INFINITY;
            for (j, tail) in prev.iter().enumerate().take(n - segs + 2).skip(i + 1) {
                let c = cost.cost(i, j) + *tail;
                if c < acc {
                    acc = c;
                }
            }
            *slot = acc;
        }
    }

    let total = best[segs_total][0];
    let mut breakpoints = Vec::with_capacity(k);
    let mut i = 0;
    for segs in (2..=segs_total).rev() {
        let mut split = None;
        for j in (i + 1)..=(n - (segs - 1)) {
            if cost.cost(i, j) + best[segs - 1][j] == best[segs][i] {
                split = Some(j);
                break;
            }
        }
        let j = split.expect("optimal split must be attained");
        breakpoints.push(j);
        i = j;
    }
    Ok((breakpoints, total))
}

/// Change-point partition of a trajectory's log-difference signal into at
/// most three ordered regimes; `k` is the breakpoint count (0, 1, or 2).
/// Labels are lifted from the difference signal to observations by giving
/// observation `i` the label of difference `min(i, len - 1)`.
pub fn cpd_segment(signal: &DiffSignal, k: usize) -> Result<ModePartition, BaselineError> {
    if k > 2 {
        return Err(BaselineError::TooManySegments { k });
    }
    let (breakpoints, _) = segment_dp(&signal.values, k)?;
    let modes = [-1i8, 0, 1];
    let mut diff_labels = Vec::with_capacity(signal.values.len());
    let mut segment = 0;
    for i in 0..signal.values.len() {
        if segment < breakpoints.len() && i >= breakpoints[segment] {
            segment += 1;
        }
        diff_labels.push(modes[segment]);
    }
    Ok(lift_to_observations(&diff_labels))
}

/// Maps difference-index labels (length N-1) to observation labels
/// (length N): observation `i` takes the label of difference
/// `min(i, N-2)`.
fn lift_to_observations(diff_labels: &[i8]) -> ModePartition {
    let last = diff_labels.len() - 1;
    let labels = (0..=diff_labels.len())
        .map(|i| diff_labels[i.min(last)])
        .collect();
    ModePartition { labels }
}

/// Three-state Gaussian chain on the difference signal: state 0 is decay,
/// state 1 the plateau, state 2 growth. The chain always starts in state
/// 0, can only move forward one state at a time, and state 2 is absorbing.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSpec {
    pub initial: [f64; 3],
    pub transition: [[f64; 3]; 3],
    /// Per-state (mean, variance) of the Gaussian emission.
    pub emissions: [(f64, f64); 3],
}

const VARIANCE_FLOOR: f64 = 1e-6;
const EM_TOL: f64 = 1e-4;
const EM_MAX_ITERATIONS: usize = 100;

impl HmmSpec {
    /// Starting transition matrix: stay/advance mixtures on the two
    /// transient states, absorbing final state, forbidden moves at zero.
    pub fn default_transition() -> [[f64; 3]; 3] {
        [[0.3, 0.7, 0.0], [0.0, 0.4, 0.6], [0.0, 0.0, 1.0]]
    }

    /// Deterministic starting point for a signal: emissions from the
    /// means/variances of its three equal thirds.
    pub fn seeded_from(signal: &DiffSignal) -> Result<Self, BaselineError> {
        let n = signal.values.len();
        if n < 3 {
            return Err(BaselineError::SignalTooShort { len: n, needed: 3 });
        }
        let bounds = [0, n / 3, 2 * n / 3, n];
        let mut emissions = [(0.0, 0.0); 3];
        for s in 0..3 {
            let chunk = &signal.values[bounds[s]..bounds[s + 1]];
            let m = chunk.len() as f64;
            let mean = chunk.iter().sum::<f64>() / m;
            let var = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            emissions[s] = (mean, var.max(VARIANCE_FLOOR));
        }
        Ok(HmmSpec {
            initial: [1.0, 0.0, 0.0],
            transition: Self::default_transition(),
            emissions,
        })
    }
}

/// Fitted chain with the decoded partition and per-iteration likelihood
/// trace.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmDecode {
    pub partition: ModePartition,
    pub transition: [[f64; 3]; 3],
    pub emissions: [(f64, f64); 3],
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub degenerate: bool,
}

fn gaussian_density(x: f64, mean: f64, variance: f64) -> f64 {
    let z = (x - mean) * (x - mean) / (2.0 * variance);
    (-z).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

struct ForwardBackward {
    log_likelihood: f64,
    /// gamma[t][i]: posterior state weight.
    gamma: Vec<[f64; 3]>,
    /// xi_sum[i][j]: expected transition counts summed over time.
    xi_sum: [[f64; 3]; 3],
}

/// Scaled forward-backward pass. Returns `None` when the scaling
/// collapses (a later observation is unreachable under the current
/// parameters), in which case the caller stops re-estimating.
fn forward_backward(signal: &[f64], spec: &HmmSpec) -> Option<ForwardBackward> {
    let t_len = signal.len();
    let emit = |t: usize, j: usize| {
        let (mean, var) = spec.emissions[j];
        gaussian_density(signal[t], mean, var)
    };

    let mut alpha = vec![[0.0f64; 3]; t_len];
    let mut scale = vec![0.0f64; t_len];
    for (j, slot) in alpha[0].iter_mut().enumerate() {
        *slot = spec.initial[j] * emit(0, j);
    }
    scale[0] = alpha[0].iter().sum();
    if scale[0] <= 0.0 || !scale[0].is_finite() {
        return None;
    }
    alpha[0].iter_mut().for_each(|a| *a /= scale[0]);
    for t in 1..t_len {
        for j in 0..3 {
            let incoming: f64 = (0..3).map(|i| alpha[t - 1][i] * spec.transition[i][j]).sum();
            alpha[t][j] = incoming * emit(t, j);
        }
        scale[t] = alpha[t].iter().sum();
        if scale[t] <= 0.0 || !scale[t].is_finite() {
            return None;
        }
        alpha[t].iter_mut().for_each(|a| *a /= scale[t]);
    }

    let mut beta = vec![[0.0f64; 3]; t_len];
    beta[t_len - 1] = [1.0; 3];
    for t in (0..t_len - 1).rev() {
        for i in 0..3 {
            let outgoing: f64 = (0..3)
                .map(|j| spec.transition[i][j] * emit(t + 1, j) * beta[t + 1][j])
                .sum();
            beta[t][i] = outgoing / scale[t + 1];
        }
    }

    let mut gamma = vec![[0.0f64; 3]; t_len];
    for t in 0..t_len {
        for i in 0..3 {
            gamma[t][i] = alpha[t][i] * beta[t][i];
        }
    }
    let mut xi_sum = [[0.0f64; 3]; 3];
    for t in 0..t_len - 1 {
        for (i, row) in xi_sum.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += alpha[t][i] * spec.transition[i][j] * emit(t + 1, j) * beta[t + 1][j]
                    / scale[t + 1];
            }
        }
    }

    Some(ForwardBackward {
        log_likelihood: scale.iter().map(|c| c.ln()).sum(),
        gamma,
        xi_sum,
    })
}

/// One re-estimation step. Forbidden transitions stay exactly zero: only
/// the allowed entries of the two transient rows are recomputed, then each
/// row is renormalized. The absorbing row and the initial distribution are
/// never touched.
fn reestimate(signal: &[f64], spec: &mut HmmSpec, fb: &ForwardBackward) {
    let t_len = signal.len();
    for i in 0..2 {
        let total: f64 = fb.gamma[..t_len - 1].iter().map(|g| g[i]).sum();
        if total > 0.0 {
            let mut row = [0.0f64; 3];
            for (j, slot) in row.iter_mut().enumerate() {
                if spec.transition[i][j] > 0.0 {
                    *slot = fb.xi_sum[i][j] / total;
                }
            }
            let row_sum: f64 = row.iter().sum();
            if row_sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= row_sum);
                spec.transition[i] = row;
            }
        }
    }
    for j in 0..3 {
        let weight: f64 = fb.gamma.iter().map(|g| g[j]).sum();
        if weight > 0.0 {
            let mean: f64 =
                fb.gamma.iter().zip(signal).map(|(g, s)| g[j] * s).sum::<f64>() / weight;
            let var: f64 = fb
                .gamma
                .iter()
                .zip(signal)
                .map(|(g, s)| g[j] * (s - mean) * (s - mean))
                .sum::<f64>()
                / weight;
            spec.emissions[j] = (mean, var.max(VARIANCE_FLOOR));
        }
    }
}

/// Most probable state path under the fitted parameters, ties resolved
/// toward the lower state index.
fn viterbi(signal: &[f64], spec: &HmmSpec) -> Vec<usize> {
    let t_len = signal.len();
    let log_emit = |t: usize, j: usize| {
        let (mean, var) = spec.emissions[j];
        gaussian_density(signal[t], mean, var).ln()
    };
    let log_trans: Vec<[f64; 3]> = spec
        .transition
        .iter()
        .map(|row| [row[0].ln(), row[1].ln(), row[2].ln()])
        .collect();

    let mut score = vec![[f64::NEG_INFINITY; 3]; t_len];
    let mut back = vec![[0usize; 3]; t_len];
    for (j, slot) in score[0].iter_mut().enumerate() {
        *slot = spec.initial[j].ln() + log_emit(0, j);
    }
    for t in 1..t_len {
        for j in 0..3 {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..3 {
                let s = score[t - 1][i] + log_trans[i][j];
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            score[t][j] = best + log_emit(t, j);
            back[t][j] = arg;
        }
    }
    let mut state = (0..3)
        .max_by(|a, b| score[t_len - 1][*a].total_cmp(&score[t_len - 1][*b]))
        .unwrap();
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = state;
    for t in (1..t_len).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    path
}

/// Fits the constrained chain by expectation-maximization (stopping when
/// the log likelihood moves by less than 1e-4 or after 100 updates) and
/// decodes the most probable path. A constant signal carries no regime
/// information and is returned as all decay with the `degenerate` flag
/// set.
pub fn hmm_fit_decode(signal: &DiffSignal, spec: &HmmSpec) -> Result<HmmDecode, BaselineError> {
    let s = &signal.values;
    if s.len() < 3 {
        return Err(BaselineError::SignalTooShort { len: s.len(), needed: 3 });
    }
    if s.iter().all(|v| *v == s[0]) {
        return Ok(HmmDecode {
            partition: lift_to_observations(&vec![-1i8; s.len()]),
            transition: spec.transition,
            emissions: spec.emissions,
            log_likelihoods: Vec::new(),
            iterations: 0,
            degenerate: true,
        });
    }

    let mut fitted = spec.clone();
    let mut log_likelihoods = Vec::new();
    let mut iterations = 0;
    while let Some(fb) = forward_backward(s, &fitted) {
        let converged = log_likelihoods
            .last()
            .is_some_and(|prev: &f64| (fb.log_likelihood - prev).abs() < EM_TOL);
        log_likelihoods.push(fb.log_likelihood);
        if converged || iterations == EM_MAX_ITERATIONS {
            break;
        }
        reestimate(s, &mut fitted, &fb);
        iterations += 1;
    }

    let path = viterbi(s, &fitted);
    let diff_labels: Vec<i8> = path.iter().map(|&st| [-1i8, 0, 1][st]).collect();
    Ok(HmmDecode {
        partition: lift_to_observations(&diff_labels),
        transition: fitted.transition,
        emissions: fitted.emissions,
        log_likelihoods,
        iterations,
        degenerate: false,
    })
}

/// Writes partitions as CSV (`id,method,obs_index,mode_label`).
pub fn write_partitions_csv<W: Write>(
    writer: W,
    rows: &[(String, String, ModePartition)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["id", "method", "obs_index", "mode_label"])?;
    for (id, method, partition) in rows {
        for (i, label) in partition.labels.iter().enumerate() {
            out.write_record([id, method, &i.to_string(), &label.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn traj(values: Vec<f64>) -> Trajectory {
        let dates = (0..values.len()).map(|i| i as f64).collect();
        Trajectory::new("t", dates, values, None).unwrap()
    }

    #[test]
    fn diff_signal_of_exact_exponentials() {
        let e = std::f64::consts::E;
        let signal = diff_signal(&traj(vec![e * e, e, 1.0]), 1.0).unwrap();
        assert_eq!(signal.values.len(), 2);
        assert_relative_eq!(signal.values[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(signal.values[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn diff_signal_of_constant_is_zero() {
        let signal = diff_signal(&traj(vec![7.0; 5]), 1.0).unwrap();
        assert!(signal.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diff_signal_floors_zeros() {
        let signal = diff_signal(&traj(vec![1.0, 0.0, 1.0]), 1.0).unwrap();
        assert!(signal.values.iter().all(|v| v.is_finite()));
        assert_relative_eq!(signal.values[0], -(0.01f64.ln()), max_relative = 1e-12);
    }

    #[test]
    fn diff_signal_needs_two_observations() {
        assert!(matches!(
            diff_signal(&traj(vec![3.0]), 1.0),
            Err(BaselineError::SignalTooShort { len: 1, needed: 2 })
        ));
    }

    #[test]
    fn cpd_recovers_noiseless_breakpoints() {
        let signal = DiffSignal {
            values: vec![1.0, 1.0, 0.0, 0.0, 0.0, -0.5, -0.5],
        };
        let (breakpoints, total) = segment_dp(&signal.values, 2).unwrap();
        assert_eq!(breakpoints, vec![2, 5]);
        assert_relative_eq!(total, 0.0, epsilon = 1e-15);
        let partition = cpd_segment(&signal, 2).unwrap();
        assert_eq!(partition.labels, vec![-1, -1, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn cpd_with_no_breakpoints_is_one_segment() {
        let signal = DiffSignal {
            values: vec![0.3, -0.1, 0.2],
        };
        let partition = cpd_segment(&signal, 0).unwrap();
        assert_eq!(partition.labels, vec![-1, -1, -1, -1]);
    }

    #[test]
    fn cpd_rejects_short_signals_and_extra_segments() {
        let signal = DiffSignal {
            values: vec![1.0, 0.0],
        };
        assert!(matches!(
            cpd_segment(&signal, 2),
            Err(BaselineError::SignalTooShort { len: 2, needed: 3 })
        ));
        assert!(matches!(
            cpd_segment(&signal, 3),
            Err(BaselineError::TooManySegments { k: 3 })
        ));
    }

    /// Exhaustive minimum over all breakpoint pairs, with the same cost
    /// primitive and summation order as the dynamic program.
    fn enumerate_two_breakpoints(signal: &[f64]) -> (Vec<usize>, f64) {
        let n = signal.len();
        let cost = SegmentCost::new(signal);
        let mut best = (vec![], f64::INFINITY);
        for b1 in 1..n - 1 {
            for b2 in b1 + 1..n {
                let c = cost.cost(0, b1) + (cost.cost(b1, b2) + cost.cost(b2, n));
                if c < best.1 {
                    best = (vec![b1, b2], c);
                }
            }
        }
        best
    }

    #[test]
    fn cpd_matches_enumeration_on_random_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.random_range(3..=12);
            let signal: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (dp_breaks, dp_cost) = segment_dp(&signal, 2).unwrap();
            let (brute_breaks, brute_cost) = enumerate_two_breakpoints(&signal);
            assert_eq!(dp_breaks, brute_breaks, "signal {signal:?}");
            assert_eq!(dp_cost, brute_cost, "signal {signal:?}");
        }
    }

    #[test]
    fn partition_from_jumps_marks_the_regimes() {
        let dates = [0.0, 30.0, 60.0, 90.0, 120.0];
        let p = partition_from_jumps(&dates, 45.0, Some(90.0));
        assert_eq!(p.labels, vec![-1, -1, 0, 0, 1]);
        let censored = partition_from_jumps(&dates, 45.0, None);
        assert_eq!(censored.labels, vec![-1, -1, 0, 0, 0]);
    }

    #[test]
    fn partition_constructor_validates() {
        assert!(ModePartition::new(vec![-1, 0, 0, 1]).is_ok());
        assert!(ModePartition::new(vec![0, -1]).is_err());
        assert!(ModePartition::new(vec![-1, 2]).is_err());
    }

    #[test]
    fn hmm_recovers_well_separated_regimes() {
        let signal = DiffSignal {
            values: vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -0.5, -0.5],
        };
        let spec = HmmSpec::seeded_from(&signal).unwrap();
        let decode = hmm_fit_decode(&signal, &spec).unwrap();
        assert!(!decode.degenerate);
        assert_eq!(
            decode.partition.labels,
            vec![-1, -1, 0, 0, 0, 0, 1, 1, 1]
        );
    }

    #[test]
    fn hmm_on_constant_signal_is_degenerate() {
        let signal = DiffSignal {
            values: vec![0.25; 6],
        };
        let spec = HmmSpec::seeded_from(&signal).unwrap();
        let decode = hmm_fit_decode(&signal, &spec).unwrap();
        assert!(decode.degenerate);
        assert_eq!(decode.iterations, 0);
        assert!(decode.partition.labels.iter().all(|l| *l == -1));
    }

    #[test]
    fn hmm_preserves_structure_on_noisy_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.random_range(6..40);
            let values: Vec<f64> = (0..n)
                .map(|i| {
                    let base = if i < n / 3 {
                        0.9
                    } else if i < 2 * n / 3 {
                        0.0
                    } else {
                        -0.4
                    };
                    base + rng.random_range(-0.3..0.3)
                })
                .collect();
            let signal = DiffSignal { values };
            let spec = HmmSpec::seeded_from(&signal).unwrap();
            let decode = hmm_fit_decode(&signal, &spec).unwrap();
            for (i, row) in decode.transition.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10, "row {i} sums to {sum}");
            }
            assert_eq!(decode.transition[0][2], 0.0);
            assert_eq!(decode.transition[1][0], 0.0);
            assert_eq!(decode.transition[2], [0.0, 0.0, 1.0]);
            for pair in decode.log_likelihoods.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "trace {:?}", decode.log_likelihoods);
            }
            for w in decode.partition.labels.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn partitions_csv_lists_every_observation() {
        let rows = vec![(
            "a".to_string(),
            "cpd".to_string(),
            ModePartition::new(vec![-1, 0, 1]).unwrap(),
        )];
        let mut buf = Vec::new();
        write_partitions_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,method,obs_index,mode_label");
        assert_eq!(lines[1], "a,cpd,0,-1");
        assert_eq!(lines[3], "a,cpd,2,1");
    }
}

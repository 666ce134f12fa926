//! Synthetic cohort generation.
//!
//! Each trajectory is built from a closed-form realization of the process:
//! the initial level fixes the decay phase and the threshold-hitting time,
//! a single Weibull draw fixes the remission duration, and the follow-up
//! horizon truncates the visit grid. Observation noise is then applied on
//! the regular visit grid (or a caller-supplied date vector).
//!
//! Randomness is fully reproducible: every trajectory owns two independent
//! streams derived from `(master_seed, batch_index, trajectory_index)`, one
//! for the initial conditions and one for the path, so results do not
//! depend on evaluation order, thread count, or batch size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pdmp::{boundary_time, weibull_quantile, ModelParams, NoiseKind, PdmpError};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Model(#[from] PdmpError),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("scenario config: {0}")]
    InvalidConfig(String),
    #[error("trajectory {id}: {reason}")]
    InvalidTrajectory { id: String, reason: String },
}

/// Latent event times behind a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Day the biomarker reaches the remission threshold.
    pub t1: f64,
    /// Day the relapse regime starts (may exceed the horizon).
    pub t2: f64,
    /// End of follow-up in days.
    pub horizon: f64,
    /// True when the relapse falls outside the observation window.
    pub censored: bool,
}

impl GroundTruth {
    pub fn new(t1: f64, t2: f64, horizon: f64) -> Result<Self, SimulateError> {
        if !(t1 > 0.0 && t2 > t1 && horizon > 0.0)
            || !t1.is_finite()
            || !t2.is_finite()
            || !horizon.is_finite()
        {
            return Err(SimulateError::InvalidTrajectory {
                id: String::new(),
                reason: format!("inconsistent truth: t1={t1}, t2={t2}, horizon={horizon}"),
            });
        }
        Ok(GroundTruth {
            t1,
            t2,
            horizon,
            censored: horizon <= t2,
        })
    }
}

/// One patient's observed series: visit days and noisy biomarker values,
/// plus the generating truth when the series is synthetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub dates: Vec<f64>,
    pub values: Vec<f64>,
    pub truth: Option<GroundTruth>,
}

impl Trajectory {
    pub fn new(
        id: impl Into<String>,
        dates: Vec<f64>,
        values: Vec<f64>,
        truth: Option<GroundTruth>,
    ) -> Result<Self, SimulateError> {
        let id = id.into();
        let fail = |reason: &str| SimulateError::InvalidTrajectory {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if dates.is_empty() {
            return Err(fail("no observations"));
        }
        if dates.len() != values.len() {
            return Err(fail("dates and values have different lengths"));
        }
        if dates.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(fail("dates must be finite and non-negative"));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("dates must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(fail("values must be finite"));
        }
        Ok(Trajectory {
            id,
            dates,
            values,
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Cohort-level simulation settings: batch shape, seed, and model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_trajectories: usize,
    pub n_batches: usize,
    pub master_seed: u64,
    pub params: ModelParams,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.n_trajectories == 0 {
            return Err(SimulateError::InvalidConfig(
                "n_trajectories must be at least 1".into(),
            ));
        }
        if self.n_batches == 0 {
            return Err(SimulateError::InvalidConfig(
                "n_batches must be at least 1".into(),
            ));
        }
        self.params.validate()?;
        Ok(())
    }
}

const STREAM_INIT: u64 = 0;
const STREAM_PATH: u64 = 1;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(master_seed: u64, batch_index: u64, trajectory_index: u64, stream: u64) -> u64 {
    let mut h = splitmix(master_seed);
    h = splitmix(h ^ batch_index);
    h = splitmix(h ^ trajectory_index);
    splitmix(h ^ stream)
}

/// Seed of the path stream (remission duration and observation noise) for
/// one trajectory of a batch. Feeding it to [`simulate_trajectory`] along
/// with the matching initial conditions reproduces the batch element.
pub fn path_seed(master_seed: u64, batch_index: u64, trajectory_index: u64) -> u64 {
    derive_seed(master_seed, batch_index, trajectory_index, STREAM_PATH)
}

/// Initial level and follow-up horizon drawn for one trajectory of a batch.
pub fn initial_conditions(
    master_seed: u64,
    batch_index: u64,
    trajectory_index: u64,
    params: &ModelParams,
) -> (f64, f64) {
    let seed = derive_seed(master_seed, batch_index, trajectory_index, STREAM_INIT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0: f64 = rng.random();
    let u1: f64 = rng.random();
    let zeta0 = params.zeta0_min + (params.zeta0_max - params.zeta0_min) * u0;
    let horizon = params.horizon_min + (params.horizon_max - params.horizon_min) * u1;
    (zeta0, horizon)
}

fn noiseless_level(d: f64, zeta0: f64, truth: &GroundTruth, params: &ModelParams) -> f64 {
    if d < truth.t1 {
        zeta0 * (params.v_minus * d).exp()
    } else if d <= truth.t2 {
        params.zeta_r
    } else {
        params.zeta_r * (params.v_plus * (d - truth.t2)).exp()
    }
}

fn simulate_on_dates(
    params: &ModelParams,
    zeta0: f64,
    horizon: f64,
    dates: Vec<f64>,
    seed: u64,
    id: String,
) -> Result<Trajectory, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = boundary_time(zeta0, params)?;
    let w = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break weibull_quantile(u, params.alpha, params.beta);
        }
    };
    let truth = GroundTruth::new(t1, t1 + w, horizon)?;

    let values = dates
        .iter()
        .map(|&d| {
            let level = noiseless_level(d, zeta0, &truth, params);
            let eps: f64 = StandardNormal.sample(&mut rng);
            match params.noise {
                NoiseKind::Additive => level + params.sigma * eps,
                NoiseKind::Multiplicative => level * (params.sigma * eps).exp(),
            }
        })
        .collect();

    Trajectory::new(id, dates, values, Some(truth))
}

/// Simulates one trajectory observed on the regular visit grid
/// `0, delta, 2*delta, ...` truncated at the horizon. The seed drives the
/// remission-duration draw and the per-visit noise; `zeta0` and `horizon`
/// are taken as given.
pub fn simulate_trajectory(
    params: &ModelParams,
    zeta0: f64,
    horizon: f64,
    seed: u64,
    id: impl Into<String>,
) -> Result<Trajectory, SimulateError> {
    params.validate()?;
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(SimulateError::InvalidHorizon(horizon));
    }
    let n_visits = (horizon / params.delta).floor() as usize;
    let dates: Vec<f64> = (0..=n_visits).map(|k| k as f64 * params.delta).collect();
    simulate_on_dates(params, zeta0, horizon, dates, seed, id.into())
}

/// Same as [`simulate_trajectory`] but observed on an arbitrary strictly
/// increasing date vector instead of the regular grid.
pub fn simulate_trajectory_with_dates(
    params: &ModelParams,
    zeta0: f64,
    horizon: f64,
    dates: &[f64],
    seed: u64,
    id: impl Into<String>,
) -> Result<Trajectory, SimulateError> {
    params.validate()?;
    if horizon <= 0.0 || !horizon.is_finite() {
        return Err(SimulateError::InvalidHorizon(horizon));
    }
    simulate_on_dates(params, zeta0, horizon, dates.to_vec(), seed, id.into())
}

/// Simulates one batch of the configured size. Trajectory ids encode the
/// batch and position (`b007-t00042`). The result is identical for any
/// thread count because every element derives its own random streams.
pub fn simulate_batch(
    config: &ScenarioConfig,
    batch_index: u64,
) -> Result<Vec<Trajectory>, SimulateError> {
    config.validate()?;
    (0..config.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let (zeta0, horizon) =
                initial_conditions(config.master_seed, batch_index, i as u64, &config.params);
            let seed = path_seed(config.master_seed, batch_index, i as u64);
            let id = format!("b{batch_index:03}-t{i:05}");
            simulate_trajectory(&config.params, zeta0, horizon, seed, id)
        })
        .collect()
}

/// Simulates every batch of the configuration in order.
pub fn simulate_all_batches(config: &ScenarioConfig) -> Result<Vec<Vec<Trajectory>>, SimulateError> {
    (0..config.n_batches as u64)
        .map(|b| simulate_batch(config, b))
        .collect()
}

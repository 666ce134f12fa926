//! Deterministic skeleton of the three-mode biomarker process.
//!
//! A trajectory moves through three regimes: exponential decay while the
//! patient responds to treatment, a flat plateau at the remission threshold,
//! and exponential regrowth after relapse. Between jumps the biomarker
//! follows closed-form flows; the switch out of remission is driven by a
//! Weibull hazard on the remission clock, while the switch out of decay
//! happens deterministically when the level hits the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdmpError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("initial level {zeta0} does not exceed the remission threshold {zeta_r}")]
    LevelBelowThreshold { zeta0: f64, zeta_r: f64 },
    #[error("hazard undefined for non-positive clock value {u}")]
    NonPositiveClock { u: f64 },
    #[error("the relapse mode is absorbing; no further transition exists")]
    AbsorbingMode,
}

/// Regime of the process. Labels follow the convention used throughout the
/// crate: -1 decay under treatment, 0 remission, 1 relapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    UnderTreatment,
    Remission,
    Relapse,
}

impl Mode {
    pub fn label(self) -> i8 {
        match self {
            Mode::UnderTreatment => -1,
            Mode::Remission => 0,
            Mode::Relapse => 1,
        }
    }

    pub fn from_label(label: i8) -> Option<Mode> {
        match label {
            -1 => Some(Mode::UnderTreatment),
            0 => Some(Mode::Remission),
            1 => Some(Mode::Relapse),
            _ => None,
        }
    }
}

/// Observation noise model applied on top of the deterministic level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Gaussian noise added to the level.
    #[default]
    Additive,
    /// Log-normal noise: the level is multiplied by exp of a Gaussian.
    Multiplicative,
}

/// Full parameter set for simulation: flow rates, remission threshold,
/// Weibull relapse-time law, observation grid and noise, and the sampling
/// ranges for the initial level and the follow-up horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Remission threshold, the plateau level.
    pub zeta_r: f64,
    /// Decay rate under treatment, strictly negative (per day).
    pub v_minus: f64,
    /// Growth rate after relapse, strictly positive (per day).
    pub v_plus: f64,
    /// Weibull shape of the remission-duration law.
    pub alpha: f64,
    /// Weibull scale of the remission-duration law (days).
    pub beta: f64,
    /// Observation noise scale.
    pub sigma: f64,
    /// Days between consecutive visits.
    pub delta: f64,
    /// Lower bound of the initial-level sampling range.
    pub zeta0_min: f64,
    /// Upper bound of the initial-level sampling range.
    pub zeta0_max: f64,
    /// Lower bound of the follow-up horizon sampling range (days).
    pub horizon_min: f64,
    /// Upper bound of the follow-up horizon sampling range (days).
    pub horizon_max: f64,
    /// Noise model; additive unless stated otherwise.
    #[serde(default)]
    pub noise: NoiseKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            zeta_r: 1.0,
            v_minus: -0.046,
            v_plus: 0.012,
            alpha: 4.69,
            beta: 1650.0,
            sigma: 1.0,
            delta: 30.0,
            zeta0_min: 15.0,
            zeta0_max: 55.0,
            horizon_min: 900.0,
            horizon_max: 1900.0,
            noise: NoiseKind::Additive,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), PdmpError> {
        fn check(
            ok: bool,
            name: &'static str,
            value: f64,
            reason: &'static str,
        ) -> Result<(), PdmpError> {
            if ok {
                Ok(())
            } else {
                Err(PdmpError::InvalidParameter {
                    name,
                    value,
                    reason,
                })
            }
        }

        let finite = [
            ("zeta_r", self.zeta_r),
            ("v_minus", self.v_minus),
            ("v_plus", self.v_plus),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("zeta0_min", self.zeta0_min),
            ("zeta0_max", self.zeta0_max),
            ("horizon_min", self.horizon_min),
            ("horizon_max", self.horizon_max),
        ];
        for (name, value) in finite {
            check(value.is_finite(), name, value, "must be finite")?;
        }
        check(self.zeta_r > 0.0, "zeta_r", self.zeta_r, "must be positive")?;
        check(
            self.v_minus < 0.0,
            "v_minus",
            self.v_minus,
            "decay rate must be negative",
        )?;
        check(
            self.v_plus > 0.0,
            "v_plus",
            self.v_plus,
            "growth rate must be positive",
        )?;
        check(self.alpha > 0.0, "alpha", self.alpha, "must be positive")?;
        check(self.beta > 0.0, "beta", self.beta, "must be positive")?;
        check(
            self.sigma >= 0.0,
            "sigma",
            self.sigma,
            "must be non-negative",
        )?;
        check(self.delta > 0.0, "delta", self.delta, "must be positive")?;
        check(
            self.zeta0_min <= self.zeta0_max,
            "zeta0_min",
            self.zeta0_min,
            "initial-level range is empty",
        )?;
        check(
            self.zeta0_min > self.zeta_r,
            "zeta0_min",
            self.zeta0_min,
            "initial levels must lie above the remission threshold",
        )?;
        check(
            self.horizon_min > 0.0,
            "horizon_min",
            self.horizon_min,
            "must be positive",
        )?;
        check(
            self.horizon_min <= self.horizon_max,
            "horizon_min",
            self.horizon_min,
            "horizon range is empty",
        )?;
        Ok(())
    }
}

/// Point of the hybrid state space: regime, biomarker level, and the
/// remission clock `u` (meaningful in remission only, where it measures the
/// time elapsed since the plateau was reached).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdmpState {
    pub mode: Mode,
    pub zeta: f64,
    pub u: f64,
}

impl PdmpState {
    pub fn under_treatment(zeta: f64) -> Self {
        PdmpState {
            mode: Mode::UnderTreatment,
            zeta,
            u: 0.0,
        }
    }

    pub fn remission(zeta: f64, u: f64) -> Self {
        PdmpState {
            mode: Mode::Remission,
            zeta,
            u,
        }
    }

    pub fn relapse(zeta: f64) -> Self {
        PdmpState {
            mode: Mode::Relapse,
            zeta,
            u: 0.0,
        }
    }
}

/// Deterministic motion for `t >= 0` days within the current regime.
///
/// Decay and relapse scale the level exponentially at their respective
/// rates; remission keeps the level flat and advances the clock.
pub fn flow(state: &PdmpState, t: f64, params: &ModelParams) -> PdmpState {
    debug_assert!(t >= 0.0, "flow is defined for non-negative durations");
    match state.mode {
        Mode::UnderTreatment => PdmpState {
            mode: state.mode,
            zeta: state.zeta * (params.v_minus * t).exp(),
            u: state.u,
        },
        Mode::Remission => PdmpState {
            mode: state.mode,
            zeta: state.zeta,
            u: state.u + t,
        },
        Mode::Relapse => PdmpState {
            mode: state.mode,
            zeta: state.zeta * (params.v_plus * t).exp(),
            u: state.u,
        },
    }
}

/// Days of decay needed for a level starting at `zeta0` to reach the
/// remission threshold. Defined only for levels strictly above it.
pub fn boundary_time(zeta0: f64, params: &ModelParams) -> Result<f64, PdmpError> {
    if zeta0 <= params.zeta_r || zeta0.is_nan() {
        return Err(PdmpError::LevelBelowThreshold {
            zeta0,
            zeta_r: params.zeta_r,
        });
    }
    Ok((params.zeta_r / zeta0).ln() / params.v_minus)
}

/// Mode switch at a jump. Decay at the threshold enters remission with a
/// reset clock; remission enters relapse; relapse is absorbing. The
/// biomarker level itself never changes at a jump.
pub fn kernel_transition(state: &PdmpState) -> Result<PdmpState, PdmpError> {
    match state.mode {
        Mode::UnderTreatment => Ok(PdmpState {
            mode: Mode::Remission,
            zeta: state.zeta,
            u: 0.0,
        }),
        Mode::Remission => Ok(PdmpState {
            mode: Mode::Relapse,
            zeta: state.zeta,
            u: state.u,
        }),
        Mode::Relapse => Err(PdmpError::AbsorbingMode),
    }
}

/// Weibull density with shape `alpha` and scale `beta`, zero on negatives.
pub fn weibull_pdf(t: f64, alpha: f64, beta: f64) -> f64 {
    assert!(
        alpha > 0.0 && beta > 0.0,
        "Weibull parameters must be positive"
    );
    if t < 0.0 {
        return 0.0;
    }
    let r = t / beta;
    (alpha / beta) * r.powf(alpha - 1.0) * (-r.powf(alpha)).exp()
}

/// Weibull survival function, 1 on negatives.
pub fn weibull_survival(t: f64, alpha: f64, beta: f64) -> f64 {
    assert!(
        alpha > 0.0 && beta > 0.0,
        "Weibull parameters must be positive"
    );
    if t < 0.0 {
        return 1.0;
    }
    (-(t / beta).powf(alpha)).exp()
}

/// Weibull hazard rate at clock value `u > 0`. This is the jump intensity
/// out of remission as a function of time spent on the plateau.
pub fn weibull_hazard(u: f64, alpha: f64, beta: f64) -> Result<f64, PdmpError> {
    assert!(
        alpha > 0.0 && beta > 0.0,
        "Weibull parameters must be positive"
    );
    if u <= 0.0 || u.is_nan() {
        return Err(PdmpError::NonPositiveClock { u });
    }
    Ok((alpha / beta) * (u / beta).powf(alpha - 1.0))
}

/// Inverse CDF; maps a uniform draw in `[0, 1)` to a Weibull variate.
pub fn weibull_quantile(p: f64, alpha: f64, beta: f64) -> f64 {
    assert!(
        alpha > 0.0 && beta > 0.0,
        "Weibull parameters must be positive"
    );
    assert!((0.0..1.0).contains(&p), "quantile needs p in [0, 1)");
    beta * (-(1.0 - p).ln()).powf(1.0 / alpha)
}

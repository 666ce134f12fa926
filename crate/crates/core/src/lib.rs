//! Simulation and estimation of remission and relapse times from
//! longitudinal biomarker trajectories.
//!
//! A patient's biomarker follows a three-mode piecewise-deterministic
//! process: exponential decay under treatment, a plateau at the remission
//! threshold, and exponential regrowth after relapse. The crate simulates
//! noisy visit-level observations of that process ([`simulate`]),
//! estimates the two jump times per patient by two-sided iterative
//! regression ([`estimate`]), fits the relapse-duration law by censored
//! Weibull maximum likelihood ([`survival`]), and scores everything
//! against ground truth or against change-point and hidden-Markov
//! baselines ([`baselines`], [`metrics`]). Real cohorts enter through
//! [`ingest`]; the simulation study presets live in [`scenario`].

pub mod baselines;
pub mod estimate;
pub mod ingest;
pub mod metrics;
pub mod pdmp;
pub mod scenario;
pub mod simulate;
pub mod survival;

pub use baselines::{
    cpd_segment, diff_signal, hmm_fit_decode, partition_from_jumps, DiffSignal, HmmDecode,
    HmmSpec, ModePartition,
};
pub use estimate::{
    estimate_cohort, estimate_t1, estimate_t2, estimate_trajectory, CohortEstimate,
    EstimateError, JumpEstimate,
};
pub use ingest::{preprocess, read_cohort, write_cohort, PreprocessConfig, PreprocessReport};
pub use metrics::{
    adjusted_rand_index, average_confusion, confusion, error_samples, error_summary, rand_index,
    ConfusionTable, ErrorSamples, ErrorSummary,
};
pub use pdmp::{Mode, ModelParams, NoiseKind, PdmpError, PdmpState};
pub use scenario::Scenario;
pub use simulate::{
    simulate_all_batches, simulate_batch, simulate_trajectory, GroundTruth, ScenarioConfig,
    SimulateError, Trajectory,
};
pub use survival::{
    fit_weibull_censored, kaplan_meier, KmCurve, SurvivalFit, SurvivalSample,
};

//! Command-line front end for the remission toolkit: simulate biomarker
//! cohorts, clean and estimate them, fit the relapse-time law, score the
//! baselines, and reproduce the full sweep studies. Every run leaves a
//! manifest recording the resolved configuration.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use remtime_core::baselines::{
    cpd_segment, diff_signal, hmm_fit_decode, partition_from_jumps, HmmSpec, ModePartition,
};
use remtime_core::estimate::{
    estimate_cohort, estimate_trajectory, read_estimates_csv, write_estimates_csv,
    write_failures_csv, CohortEstimate,
};
use remtime_core::ingest::{
    attach_truth, read_cohort_path, read_truth_path, write_cohort_path, write_report_json,
    write_truth_path, PreprocessConfig,
};
use remtime_core::metrics::{
    adjusted_rand_index, average_confusion, confusion, error_samples, rand_index,
    write_comparison_csv, write_confusion_csv, write_error_summary_csv, ErrorSamples,
};
use remtime_core::pdmp::ModelParams;
use remtime_core::scenario::{Scenario, DEFAULT_BATCHES};
use remtime_core::simulate::{simulate_batch, ScenarioConfig, Trajectory};
use remtime_core::survival::{
    fit_weibull_censored, kaplan_meier, samples_from_estimates, write_fit_json, write_km_csv,
    SurvivalSample,
};

#[derive(Parser, Debug)]
#[command(
    name = "remtime",
    version,
    about = "Remission and relapse time estimation toolkit",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate noisy biomarker cohorts with ground-truth jump times.
    Simulate(SimulateArgs),
    /// Clean a raw cohort CSV, reporting every removed point and series.
    Preprocess(PreprocessArgs),
    /// Estimate remission and relapse times for every trajectory.
    Estimate(EstimateArgs),
    /// Fit the censored Weibull relapse-time law and the Kaplan-Meier curve.
    FitSurvival(FitSurvivalArgs),
    /// Simulate or read a cohort, then estimate and fit in one run.
    Pipeline(PipelineArgs),
    /// Score the estimator against both baselines on relapse-only data.
    Compare(CompareArgs),
    /// Reproduce a named sweep study and emit its summary tables.
    Scenario(ScenarioArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
    /// Master seed of the reproducible stream tree.
    #[arg(long, env = "REMTIME_SEED", default_value_t = 0)]
    seed: u64,
    /// Trajectories per batch.
    #[arg(long, env = "REMTIME_N", default_value_t = 500)]
    n: usize,
    /// Number of batches; ids carry the batch index.
    #[arg(long, env = "REMTIME_BATCHES", default_value_t = 1)]
    batches: usize,
    /// JSON file overriding model parameters (missing fields keep defaults).
    #[arg(long, env = "REMTIME_CONFIG")]
    config: Option<PathBuf>,
    /// Remission threshold override.
    #[arg(long = "zeta-r", env = "REMTIME_ZETA_R")]
    zeta_r: Option<f64>,
    /// Worker threads (0 picks the machine default).
    #[arg(long, env = "REMTIME_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Cohort CSV to clean.
    #[arg(long = "in", env = "REMTIME_IN")]
    input: PathBuf,
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
    /// Level below which an isolated visit is treated as a dip.
    #[arg(long, env = "REMTIME_LOW", default_value_t = PreprocessConfig::default().low)]
    low: f64,
    /// Level above which a series is considered not yet remitted.
    #[arg(long, env = "REMTIME_HIGH", default_value_t = PreprocessConfig::default().high)]
    high: f64,
    /// Minimum number of visits a series must keep.
    #[arg(long, env = "REMTIME_MIN_OBS", default_value_t = PreprocessConfig::default().min_obs)]
    min_obs: usize,
    /// Minimum number of visits below the high level.
    #[arg(long, env = "REMTIME_MIN_BELOW", default_value_t = PreprocessConfig::default().min_below)]
    min_below: usize,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Cohort CSV to estimate.
    #[arg(long = "in", env = "REMTIME_IN")]
    input: PathBuf,
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
    /// Remission threshold.
    #[arg(long = "zeta-r", env = "REMTIME_ZETA_R", default_value_t = 1.0)]
    zeta_r: f64,
    /// Worker threads (0 picks the machine default).
    #[arg(long, env = "REMTIME_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug)]
struct FitSurvivalArgs {
    /// Estimates CSV produced by the estimate step.
    #[arg(long, env = "REMTIME_ESTIMATES")]
    estimates: PathBuf,
    /// Cohort CSV the estimates were computed from.
    #[arg(long, env = "REMTIME_COHORT")]
    cohort: PathBuf,
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Existing cohort CSV; omit to simulate one instead.
    #[arg(long = "in", env = "REMTIME_IN")]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
    /// Master seed used when simulating.
    #[arg(long, env = "REMTIME_SEED", default_value_t = 0)]
    seed: u64,
    /// Trajectories to simulate when no input is given.
    #[arg(long, env = "REMTIME_N", default_value_t = 500)]
    n: usize,
    /// JSON file overriding model parameters when simulating.
    #[arg(long, env = "REMTIME_CONFIG")]
    config: Option<PathBuf>,
    /// Remission threshold override.
    #[arg(long = "zeta-r", env = "REMTIME_ZETA_R")]
    zeta_r: Option<f64>,
    /// Worker threads (0 picks the machine default).
    #[arg(long, env = "REMTIME_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Cohort CSV.
    #[arg(long, env = "REMTIME_COHORT")]
    cohort: PathBuf,
    /// Ground-truth CSV matching the cohort.
    #[arg(long, env = "REMTIME_TRUTH")]
    truth: PathBuf,
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
    /// Remission threshold.
    #[arg(long = "zeta-r", env = "REMTIME_ZETA_R", default_value_t = 1.0)]
    zeta_r: f64,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Sweep study name: I, II, III, Ia, IIa, or IIIa.
    name: String,
    /// Output directory.
    #[arg(long, env = "REMTIME_OUT")]
    out: PathBuf,
    /// Master seed of the reproducible stream tree.
    #[arg(long, env = "REMTIME_SEED", default_value_t = 0)]
    seed: u64,
    /// Batches per sweep setting; lower it for smoke runs.
    #[arg(long, env = "REMTIME_BATCHES", default_value_t = DEFAULT_BATCHES)]
    batches: usize,
    /// JSON file overriding the non-swept model parameters.
    #[arg(long, env = "REMTIME_CONFIG")]
    config: Option<PathBuf>,
    /// Remission threshold override.
    #[arg(long = "zeta-r", env = "REMTIME_ZETA_R")]
    zeta_r: Option<f64>,
    /// Worker threads (0 picks the machine default).
    #[arg(long, env = "REMTIME_WORKERS", default_value_t = 0)]
    workers: usize,
}

/// Written next to every command's outputs; together with the binary
/// version it pins down everything needed to reproduce the run.
#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    resolved_config: serde_json::Value,
    master_seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    tool_version: String,
    duration_seconds: f64,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::FitSurvival(args) => cmd_fit_survival(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Scenario(args) => cmd_scenario(args),
    }
}

fn init_workers(workers: usize) -> Result<()> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool could not be configured")?;
    }
    Ok(())
}

fn load_params(config: Option<&Path>, zeta_r: Option<f64>) -> Result<ModelParams> {
    let mut params = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        }
        None => ModelParams::default(),
    };
    if let Some(z) = zeta_r {
        params.zeta_r = z;
    }
    params.validate()?;
    Ok(params)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn finish_run(
    out_dir: &Path,
    subcommand: &str,
    resolved_config: serde_json::Value,
    master_seed: Option<u64>,
    inputs: &[&Path],
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        resolved_config,
        master_seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_path = out_dir.join("run_manifest.json");
    let mut writer = create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut writer, &manifest)?;
    use std::io::Write;
    writer.write_all(b"\n")?;
    println!(
        "{subcommand}: wrote {} files to {}",
        outputs.len() + 1,
        out_dir.display()
    );
    Ok(())
}

fn truth_rows(cohort: &[Trajectory]) -> Result<Vec<(String, remtime_core::GroundTruth)>> {
    cohort
        .iter()
        .map(|t| {
            t.truth
                .map(|truth| (t.id.clone(), truth))
                .ok_or_else(|| anyhow!("trajectory {} has no ground truth", t.id))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let started = Instant::now();
    init_workers(args.workers)?;
    let params = load_params(args.config.as_deref(), args.zeta_r)?;
    let config = ScenarioConfig {
        n_trajectories: args.n,
        n_batches: args.batches,
        master_seed: args.seed,
        params,
    };
    config.validate()?;
    fs::create_dir_all(&args.out)?;

    let mut cohort = Vec::with_capacity(args.n * args.batches);
    for b in 0..args.batches as u64 {
        cohort.extend(simulate_batch(&config, b)?);
    }
    let cohort_path = args.out.join("cohort.csv");
    write_cohort_path(&cohort_path, &cohort)?;
    let truth_path = args.out.join("truth.csv");
    write_truth_path(&truth_path, &truth_rows(&cohort)?)?;

    finish_run(
        &args.out,
        "simulate",
        json!({
            "params": config.params,
            "n_trajectories": config.n_trajectories,
            "n_batches": config.n_batches,
        }),
        Some(args.seed),
        &[],
        &[cohort_path, truth_path],
        started,
    )
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let started = Instant::now();
    let config = PreprocessConfig {
        low: args.low,
        high: args.high,
        min_obs: args.min_obs,
        min_below: args.min_below,
    };
    let cohort = read_cohort_path(&args.input)
        .with_context(|| format!("cannot read cohort {}", args.input.display()))?;
    let (cleaned, report) = remtime_core::ingest::preprocess(cohort, &config);
    fs::create_dir_all(&args.out)?;

    let cohort_path = args.out.join("cohort.csv");
    write_cohort_path(&cohort_path, &cleaned)?;
    let report_path = args.out.join("preprocess_report.json");
    write_report_json(create(&report_path)?, &report)?;

    eprintln!(
        "preprocess: kept {} of {} trajectories, removed {} points",
        report.trajectories_after,
        report.trajectories_before,
        report.observations_before - report.observations_after
    );
    finish_run(
        &args.out,
        "preprocess",
        json!({ "config": config }),
        None,
        &[&args.input],
        &[cohort_path, report_path],
        started,
    )
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let started = Instant::now();
    init_workers(args.workers)?;
    let cohort = read_cohort_path(&args.input)
        .with_context(|| format!("cannot read cohort {}", args.input.display()))?;
    if args.zeta_r <= 0.0 {
        bail!("--zeta-r must be positive");
    }
    let estimates = estimate_cohort(&cohort, args.zeta_r);
    fs::create_dir_all(&args.out)?;

    let estimates_path = args.out.join("estimates.csv");
    write_estimates_csv(create(&estimates_path)?, &estimates)?;
    let failures_path = args.out.join("failures.csv");
    write_failures_csv(create(&failures_path)?, &estimates)?;

    let failed = estimates.iter().filter(|e| e.outcome.is_err()).count();
    eprintln!(
        "estimate: {} trajectories, {} failed",
        estimates.len(),
        failed
    );
    finish_run(
        &args.out,
        "estimate",
        json!({ "zeta_r": args.zeta_r }),
        None,
        &[&args.input],
        &[estimates_path, failures_path],
        started,
    )
}

fn survival_outputs(
    out_dir: &Path,
    estimates: &[CohortEstimate],
    cohort: &[Trajectory],
) -> Result<Vec<PathBuf>> {
    let (samples, dropped) = samples_from_estimates(estimates, cohort);
    if dropped > 0 {
        eprintln!("fit-survival: {dropped} trajectories lacked a usable duration");
    }
    let fit = fit_weibull_censored(&samples)?;
    let fit_path = out_dir.join("weibull_fit.json");
    write_fit_json(create(&fit_path)?, &fit)?;
    let curve = kaplan_meier(&samples)?;
    let km_path = out_dir.join("km.csv");
    write_km_csv(create(&km_path)?, &curve)?;
    eprintln!(
        "fit-survival: shape {:.3}, scale {:.1}, {} events / {} censored",
        fit.alpha_hat, fit.beta_hat, fit.n_events, fit.n_censored
    );
    Ok(vec![fit_path, km_path])
}

fn cmd_fit_survival(args: FitSurvivalArgs) -> Result<()> {
    let started = Instant::now();
    let rows = read_estimates_csv(
        File::open(&args.estimates)
            .with_context(|| format!("cannot read estimates {}", args.estimates.display()))?,
    )?;
    let estimates: Vec<CohortEstimate> = rows
        .into_iter()
        .map(|(id, est)| CohortEstimate {
            id,
            outcome: Ok(est),
        })
        .collect();
    let cohort = read_cohort_path(&args.cohort)
        .with_context(|| format!("cannot read cohort {}", args.cohort.display()))?;
    fs::create_dir_all(&args.out)?;

    let outputs = survival_outputs(&args.out, &estimates, &cohort)?;
    finish_run(
        &args.out,
        "fit-survival",
        json!({}),
        None,
        &[&args.estimates, &args.cohort],
        &outputs,
        started,
    )
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let started = Instant::now();
    init_workers(args.workers)?;
    fs::create_dir_all(&args.out)?;

    let mut outputs = Vec::new();
    let mut inputs = Vec::new();
    let params = load_params(args.config.as_deref(), args.zeta_r)?;
    let cohort = match &args.input {
        Some(path) => {
            inputs.push(path.as_path());
            read_cohort_path(path)
                .with_context(|| format!("cannot read cohort {}", path.display()))?
        }
        None => {
            let config = ScenarioConfig {
                n_trajectories: args.n,
                n_batches: 1,
                master_seed: args.seed,
                params: params.clone(),
            };
            config.validate()?;
            let cohort = simulate_batch(&config, 0)?;
            let cohort_path = args.out.join("cohort.csv");
            write_cohort_path(&cohort_path, &cohort)?;
            let truth_path = args.out.join("truth.csv");
            write_truth_path(&truth_path, &truth_rows(&cohort)?)?;
            outputs.push(cohort_path);
            outputs.push(truth_path);
            cohort
        }
    };

    let estimates = estimate_cohort(&cohort, params.zeta_r);
    let estimates_path = args.out.join("estimates.csv");
    write_estimates_csv(create(&estimates_path)?, &estimates)?;
    let failures_path = args.out.join("failures.csv");
    write_failures_csv(create(&failures_path)?, &estimates)?;
    outputs.push(estimates_path);
    outputs.push(failures_path);

    outputs.extend(survival_outputs(&args.out, &estimates, &cohort)?);
    finish_run(
        &args.out,
        "pipeline",
        json!({
            "params": params,
            "n_trajectories": args.n,
            "simulated": args.input.is_none(),
        }),
        args.input.is_none().then_some(args.seed),
        &inputs,
        &outputs,
        started,
    )
}

fn method_rows(
    traj: &Trajectory,
    zeta_r: f64,
) -> Result<Vec<(String, String, f64, f64)>> {
    let truth = traj
        .truth
        .ok_or_else(|| anyhow!("trajectory {} has no ground truth", traj.id))?;
    let reference = partition_from_jumps(&traj.dates, truth.t1, Some(truth.t2));

    let regression = match estimate_trajectory(traj, zeta_r) {
        Ok(fit) => partition_from_jumps(&traj.dates, fit.t1_hat, fit.t2_hat),
        Err(_) => ModePartition::new(vec![-1; traj.len()])?,
    };
    let signal = diff_signal(traj, zeta_r)?;
    let cpd = cpd_segment(&signal, 2)?;
    let hmm = hmm_fit_decode(&signal, &HmmSpec::seeded_from(&signal)?)?.partition;

    let mut rows = Vec::with_capacity(3);
    for (method, partition) in [
        ("regression", &regression),
        ("cpd", &cpd),
        ("hmm", &hmm),
    ] {
        rows.push((
            traj.id.clone(),
            method.to_string(),
            rand_index(&reference.labels, &partition.labels)?,
            adjusted_rand_index(&reference.labels, &partition.labels)?,
        ));
    }
    Ok(rows)
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let started = Instant::now();
    let mut cohort = read_cohort_path(&args.cohort)
        .with_context(|| format!("cannot read cohort {}", args.cohort.display()))?;
    let truths = read_truth_path(&args.truth)
        .with_context(|| format!("cannot read truth {}", args.truth.display()))?;
    attach_truth(&mut cohort, &truths)?;

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for traj in &cohort {
        let truth = traj.truth.unwrap();
        if truth.censored {
            continue;
        }
        if traj.len() < 4 {
            skipped += 1;
            continue;
        }
        rows.extend(method_rows(traj, args.zeta_r)?);
    }
    if rows.is_empty() {
        bail!("no relapse trajectories to compare");
    }
    if skipped > 0 {
        eprintln!("compare: skipped {skipped} trajectories with fewer than 4 visits");
    }
    fs::create_dir_all(&args.out)?;
    let comparison_path = args.out.join("comparison.csv");
    write_comparison_csv(create(&comparison_path)?, &rows)?;

    finish_run(
        &args.out,
        "compare",
        json!({ "zeta_r": args.zeta_r }),
        None,
        &[&args.cohort, &args.truth],
        &[comparison_path],
        started,
    )
}

#[derive(Serialize)]
struct FitRow {
    scenario: String,
    param_value: f64,
    batch: u64,
    alpha_hat: f64,
    beta_hat: f64,
    n_events: usize,
    n_censored: usize,
    converged: bool,
}

fn cmd_scenario(args: ScenarioArgs) -> Result<()> {
    let started = Instant::now();
    init_workers(args.workers)?;
    let scenario: Scenario = args.name.parse().map_err(|e: String| anyhow!(e))?;
    if args.batches == 0 {
        bail!("--batches must be at least 1");
    }
    let override_params = match (&args.config, args.zeta_r) {
        (None, None) => None,
        (config, zeta_r) => Some(load_params(config.as_deref(), zeta_r)?),
    };

    let mut settings = scenario.settings(args.seed, args.batches);
    if let Some(base) = &override_params {
        for (value, config) in &mut settings {
            let mut params = base.clone();
            match scenario.sweep_parameter() {
                "delta" => params.delta = *value,
                "sigma" => params.sigma = *value,
                _ => {}
            }
            config.params = params;
        }
    }

    let label = scenario.to_string();
    let mut confusion_rows = Vec::new();
    let mut error_rows = Vec::new();
    let mut fit_rows = Vec::new();
    for (value, config) in &settings {
        let mut tables = Vec::new();
        let mut errors = ErrorSamples::default();
        let mut pooled_samples: Vec<SurvivalSample> = Vec::new();
        for b in 0..config.n_batches as u64 {
            let batch = simulate_batch(config, b)?;
            let estimates = estimate_cohort(&batch, config.params.zeta_r);
            tables.push(confusion(&batch, &estimates)?);
            errors.extend(&error_samples(&batch, &estimates)?);
            let (samples, _) = samples_from_estimates(&estimates, &batch);
            if let Ok(fit) = fit_weibull_censored(&samples) {
                fit_rows.push(FitRow {
                    scenario: label.clone(),
                    param_value: *value,
                    batch: b,
                    alpha_hat: fit.alpha_hat,
                    beta_hat: fit.beta_hat,
                    n_events: fit.n_events,
                    n_censored: fit.n_censored,
                    converged: fit.converged,
                });
            }
            pooled_samples.extend(samples);
        }
        let pooled_fit = fit_weibull_censored(&pooled_samples).ok();
        confusion_rows.push((label.clone(), *value, average_confusion(&tables)));
        error_rows.push((
            label.clone(),
            *value,
            errors.summarize(pooled_fit.as_ref(), &config.params),
        ));
        eprintln!(
            "scenario {label}: {} = {value} done ({} batches)",
            scenario.sweep_parameter(),
            config.n_batches
        );
    }

    fs::create_dir_all(&args.out)?;
    let confusion_path = args.out.join("confusion.csv");
    write_confusion_csv(create(&confusion_path)?, &confusion_rows)?;
    let errors_path = args.out.join("errors.csv");
    write_error_summary_csv(create(&errors_path)?, &error_rows)?;
    let fits_path = args.out.join("fits.csv");
    let mut fits_writer = csv::Writer::from_writer(create(&fits_path)?);
    for row in &fit_rows {
        fits_writer.serialize(row)?;
    }
    fits_writer.flush()?;

    finish_run(
        &args.out,
        "scenario",
        json!({
            "scenario": label,
            "sweep_parameter": scenario.sweep_parameter(),
            "sweep_values": scenario.sweep_values(),
            "batches": args.batches,
            "params_override": override_params,
        }),
        Some(args.seed),
        &[],
        &[confusion_path, errors_path, fits_path],
        started,
    )
}

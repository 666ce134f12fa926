//! Behavioral checks for the jump-time estimators on simulated cohorts:
//! exact recovery without noise, graceful degradation as the visit
//! spacing widens, and detection quality under the default noise level.

use remtime_core::estimate::estimate_cohort;
use remtime_core::pdmp::ModelParams;
use remtime_core::simulate::{simulate_batch, ScenarioConfig, Trajectory};

fn cohort(params: ModelParams, n: usize, seed: u64, batch: u64) -> Vec<Trajectory> {
    let config = ScenarioConfig {
        n_trajectories: n,
        n_batches: 1,
        master_seed: seed,
        params,
    };
    simulate_batch(&config, batch).unwrap()
}

/// Without observation noise the log-linear sweeps see exact lines, so
/// both jump times come back at machine-level accuracy whenever the
/// trajectory carries enough points on each side of the jumps.
#[test]
fn noiseless_observations_recover_both_jump_times() {
    let params = ModelParams {
        sigma: 0.0,
        delta: 10.0,
        ..ModelParams::default()
    };
    let trajs = cohort(params.clone(), 200, 99, 0);
    let estimates = estimate_cohort(&trajs, params.zeta_r);

    let mut checked_relapsers = 0;
    let mut checked_censored = 0;
    for (traj, est) in trajs.iter().zip(&estimates) {
        assert_eq!(traj.id, est.id);
        let truth = traj.truth.unwrap();
        let fit = est.outcome.as_ref().expect("noiseless fits succeed");
        assert!(
            (fit.t1_hat - truth.t1).abs() < 1e-6,
            "{}: t1_hat {} vs {}",
            traj.id,
            fit.t1_hat,
            truth.t1
        );
        if truth.censored {
            assert!(fit.censored_pred(), "{}: phantom relapse", traj.id);
            checked_censored += 1;
        } else if truth.t2 + 3.0 * params.delta <= truth.horizon {
            let t2_hat = fit.t2_hat.expect("visible relapse detected");
            assert!(
                (t2_hat - truth.t2).abs() < 1e-6,
                "{}: t2_hat {} vs {}",
                traj.id,
                t2_hat,
                truth.t2
            );
            checked_relapsers += 1;
        }
    }
    assert!(checked_relapsers >= 30, "too few relapsers exercised");
    assert!(checked_censored >= 30, "too few censored exercised");
}

/// Mean absolute error of the remission estimate grows with the visit
/// spacing. Sampling noise may flip one adjacent pair, not more.
#[test]
fn remission_error_degrades_with_visit_spacing() {
    let deltas = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
    let mut means = Vec::new();
    for &delta in &deltas {
        let params = ModelParams {
            delta,
            ..ModelParams::default()
        };
        let mut errors = Vec::new();
        for batch in 0..5 {
            let trajs = cohort(params.clone(), 500, 4242, batch);
            let estimates = estimate_cohort(&trajs, params.zeta_r);
            for (traj, est) in trajs.iter().zip(&estimates) {
                if let Ok(fit) = &est.outcome {
                    errors.push((fit.t1_hat - traj.truth.unwrap().t1).abs());
                }
            }
        }
        assert!(errors.len() > 2000, "estimation failed too often at delta {delta}");
        means.push(errors.iter().sum::<f64>() / errors.len() as f64);
    }
    let inversions = means.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(
        inversions <= 1,
        "error means not close to monotone in spacing: {means:?}"
    );
    assert!(
        means[5] > means[0],
        "widest spacing should be clearly worse than tightest: {means:?}"
    );
}

/// More observation noise means larger remission-time error.
#[test]
fn remission_error_grows_with_noise() {
    let mut means = Vec::new();
    for &sigma in &[0.25, 5.0] {
        let params = ModelParams {
            sigma,
            ..ModelParams::default()
        };
        let mut errors = Vec::new();
        for batch in 0..3 {
            let trajs = cohort(params.clone(), 500, 777, batch);
            let estimates = estimate_cohort(&trajs, params.zeta_r);
            for (traj, est) in trajs.iter().zip(&estimates) {
                if let Ok(fit) = &est.outcome {
                    errors.push((fit.t1_hat - traj.truth.unwrap().t1).abs());
                }
            }
        }
        means.push(errors.iter().sum::<f64>() / errors.len() as f64);
    }
    assert!(
        means[0] < means[1],
        "quiet cohort should beat noisy cohort: {means:?}"
    );
}

/// Under the default noise level the detector finds most relapses, and
/// nearly all of those with enough follow-up room after the jump for
/// the level to clear the noise band.
#[test]
fn relapse_recall_stays_high_at_default_noise() {
    let params = ModelParams::default();
    let mut relapsers = 0usize;
    let mut detected = 0usize;
    let mut roomy = 0usize;
    let mut roomy_detected = 0usize;
    for batch in 0..4 {
        let trajs = cohort(params.clone(), 500, 31415, batch);
        let estimates = estimate_cohort(&trajs, params.zeta_r);
        for (traj, est) in trajs.iter().zip(&estimates) {
            let truth = traj.truth.unwrap();
            if truth.censored {
                continue;
            }
            relapsers += 1;
            let hit = match &est.outcome {
                Ok(fit) => fit.t2_hat.is_some_and(|t2| t2 <= truth.horizon),
                Err(_) => false,
            };
            detected += usize::from(hit);
            if truth.t2 + 6.0 * params.delta <= truth.horizon {
                roomy += 1;
                roomy_detected += usize::from(hit);
            }
        }
    }
    let recall = detected as f64 / relapsers as f64;
    let roomy_recall = roomy_detected as f64 / roomy as f64;
    println!(
        "measured relapse recall over 4 batches: {recall:.4} overall ({relapsers} relapsers), \
         {roomy_recall:.4} with >= 6 visits after the jump ({roomy} relapsers)"
    );
    assert!(recall >= 0.6, "overall relapse recall too low: {recall}");
    assert!(
        roomy_recall >= 0.9,
        "recall on well-observed relapses too low: {roomy_recall}"
    );
}

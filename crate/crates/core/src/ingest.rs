//! Cohort file I/O and trajectory cleaning.
//!
//! Raw biomarker series carry artifacts that break log-linear fitting:
//! ramp-up visits before treatment response, isolated assay dropouts, and
//! series too short or too high to ever show a remission. Cleaning removes
//! those in a fixed rule order and reports every action so the original
//! data remain reconstructible.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{GroundTruth, SimulateError, Trajectory};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("data row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("duplicate visit for id `{id}` at day {day} (data rows {first_row} and {second_row})")]
    DuplicateVisit {
        id: String,
        day: f64,
        first_row: usize,
        second_row: usize,
    },
    #[error(transparent)]
    Trajectory(#[from] SimulateError),
    #[error("truth file does not cover trajectory `{0}`")]
    MissingTruth(String),
}

/// Reads a long-format cohort (`id,day,value`). Rows may arrive in any
/// order; trajectories come back sorted by id with visits sorted by day.
/// Values must be finite (negative values are kept, since additive noise
/// can produce them); days must be finite and non-negative.
pub fn read_cohort<R: Read>(reader: R) -> Result<Vec<Trajectory>, IngestError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    for required in ["id", "day", "value"] {
        if !headers.iter().any(|h| h == required) {
            return Err(IngestError::MissingColumn(match required {
                "id" => "id",
                "day" => "day",
                _ => "value",
            }));
        }
    }

    #[derive(Deserialize)]
    struct Row {
        id: String,
        day: f64,
        value: f64,
    }

    let mut by_id: HashMap<String, Vec<(f64, f64, usize)>> = HashMap::new();
    for (i, record) in csv_reader.deserialize::<Row>().enumerate() {
        let row_number = i + 1;
        let row = record.map_err(|e| IngestError::BadRow {
            row: row_number,
            reason: e.to_string(),
        })?;
        if !row.day.is_finite() || row.day < 0.0 {
            return Err(IngestError::BadRow {
                row: row_number,
                reason: format!("day must be a non-negative finite number, got {}", row.day),
            });
        }
        if !row.value.is_finite() {
            return Err(IngestError::BadRow {
                row: row_number,
                reason: format!("value must be finite, got {}", row.value),
            });
        }
        by_id
            .entry(row.id)
            .or_default()
            .push((row.day, row.value, row_number));
    }

    let mut cohort = Vec::with_capacity(by_id.len());
    let mut ids: Vec<String> = by_id.keys().cloned().collect();
    ids.sort();
    for id in ids {
        let mut visits = by_id.remove(&id).unwrap();
        visits.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in visits.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(IngestError::DuplicateVisit {
                    id,
                    day: pair[0].0,
                    first_row: pair[0].2,
                    second_row: pair[1].2,
                });
            }
        }
        let dates = visits.iter().map(|v| v.0).collect();
        let values = visits.iter().map(|v| v.1).collect();
        cohort.push(Trajectory::new(&id, dates, values, None)?);
    }
    Ok(cohort)
}

pub fn read_cohort_path<P: AsRef<Path>>(path: P) -> Result<Vec<Trajectory>, IngestError> {
    read_cohort(File::open(path)?)
}

/// Writes a cohort in long format (`id,day,value`), one row per visit, in
/// the given trajectory order.
pub fn write_cohort<W: Write>(writer: W, cohort: &[Trajectory]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["id", "day", "value"])?;
    for traj in cohort {
        for (day, value) in traj.dates.iter().zip(&traj.values) {
            out.serialize((&traj.id, day, value))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_cohort_path<P: AsRef<Path>>(path: P, cohort: &[Trajectory]) -> Result<(), IngestError> {
    write_cohort(File::create(path)?, cohort)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    id: String,
    #[serde(rename = "T1")]
    t1: f64,
    #[serde(rename = "T2")]
    t2: f64,
    horizon: f64,
    censored: u8,
}

/// Writes ground truths as CSV (`id,T1,T2,horizon,censored` with a 0/1
/// censoring flag).
pub fn write_truth<W: Write>(
    writer: W,
    truths: &[(String, GroundTruth)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    for (id, truth) in truths {
        out.serialize(TruthRow {
            id: id.clone(),
            t1: truth.t1,
            t2: truth.t2,
            horizon: truth.horizon,
            censored: truth.censored as u8,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_truth_path<P: AsRef<Path>>(
    path: P,
    truths: &[(String, GroundTruth)],
) -> Result<(), IngestError> {
    write_truth(File::create(path)?, truths)?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> Result<Vec<(String, GroundTruth)>, IngestError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut truths = Vec::new();
    for (i, record) in csv_reader.deserialize::<TruthRow>().enumerate() {
        let row = record.map_err(|e| IngestError::BadRow {
            row: i + 1,
            reason: e.to_string(),
        })?;
        let truth = GroundTruth::new(row.t1, row.t2, row.horizon).map_err(|e| {
            IngestError::BadRow {
                row: i + 1,
                reason: e.to_string(),
            }
        })?;
        truths.push((row.id, truth));
    }
    Ok(truths)
}

pub fn read_truth_path<P: AsRef<Path>>(path: P) -> Result<Vec<(String, GroundTruth)>, IngestError> {
    read_truth(File::open(path)?)
}

/// Attaches ground truths to trajectories by id; every trajectory must be
/// covered.
pub fn attach_truth(
    cohort: &mut [Trajectory],
    truths: &[(String, GroundTruth)],
) -> Result<(), IngestError> {
    let map: HashMap<&str, &GroundTruth> =
        truths.iter().map(|(id, t)| (id.as_str(), t)).collect();
    for traj in cohort.iter_mut() {
        let truth = map
            .get(traj.id.as_str())
            .ok_or_else(|| IngestError::MissingTruth(traj.id.clone()))?;
        traj.truth = Some(**truth);
    }
    Ok(())
}

/// Cleaning thresholds: `low`/`high` biomarker levels, the minimum series
/// length, and the minimum number of below-`high` observations required
/// to call a series remitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub low: f64,
    pub high: f64,
    pub min_obs: usize,
    pub min_below: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            low: 1.0,
            high: 5.0,
            min_obs: 10,
            min_below: 2,
        }
    }
}

/// Why an observation was removed or a trajectory dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleTag {
    LeadingLow,
    IsolatedDip,
    LowStart,
    NeverRemitted,
    TooShort,
}

/// One removed observation, indexed against the original series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub index: usize,
    pub day: f64,
    pub value: f64,
    pub rule: RuleTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRemovals {
    pub id: String,
    pub removed: Vec<Removal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedTrajectory {
    pub id: String,
    pub rule: RuleTag,
}

/// Audit of a preprocessing run: every removed observation with its rule,
/// every dropped trajectory with its rule, and the before/after counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub trajectories_before: usize,
    pub trajectories_after: usize,
    pub observations_before: usize,
    pub observations_after: usize,
    pub removals: Vec<TrajectoryRemovals>,
    pub dropped: Vec<DroppedTrajectory>,
}

pub fn write_report_json<W: Write>(
    mut writer: W,
    report: &PreprocessReport,
) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writer.write_all(b"\n")
}

/// Cleans a cohort:
/// 1. repeatedly removes the first observation while it is lower than the
///    second (treatment ramp-up);
/// 2. removes below-`low` observations whose both neighbors exceed
///    `high` (isolated dropouts; endpoints are never removed);
///    steps 1-2 alternate until neither applies, so cleaning is
///    idempotent;
/// 3. drops trajectories starting below `high` (no observed decay);
/// 4. drops trajectories with fewer than `min_below` observations below
///    `high` (never remitted);
/// 5. drops trajectories shorter than `min_obs`.
pub fn preprocess(
    cohort: Vec<Trajectory>,
    config: &PreprocessConfig,
) -> (Vec<Trajectory>, PreprocessReport) {
    let mut report = PreprocessReport {
        trajectories_before: cohort.len(),
        trajectories_after: 0,
        observations_before: cohort.iter().map(Trajectory::len).sum(),
        observations_after: 0,
        removals: Vec::new(),
        dropped: Vec::new(),
    };

    let mut kept = Vec::with_capacity(cohort.len());
    for traj in cohort {
        let mut visits: Vec<(usize, f64, f64)> = traj
            .dates
            .iter()
            .zip(&traj.values)
            .enumerate()
            .map(|(i, (&d, &v))| (i, d, v))
            .collect();
        let mut removed = Vec::new();

        loop {
            let before = visits.len();
            while visits.len() >= 2 && visits[0].2 < visits[1].2 {
                let (index, day, value) = visits.remove(0);
                removed.push(Removal {
                    index,
                    day,
                    value,
                    rule: RuleTag::LeadingLow,
                });
            }
            let mut i = 1;
            while i + 1 < visits.len() {
                if visits[i].2 < config.low
                    && visits[i - 1].2 > config.high
                    && visits[i + 1].2 > config.high
                {
                    let (index, day, value) = visits.remove(i);
                    removed.push(Removal {
                        index,
                        day,
                        value,
                        rule: RuleTag::IsolatedDip,
                    });
                } else {
                    i += 1;
                }
            }
            if visits.len() == before {
                break;
            }
        }

        if !removed.is_empty() {
            report.removals.push(TrajectoryRemovals {
                id: traj.id.clone(),
                removed,
            });
        }

        let drop_rule = if visits[0].2 < config.high {
            Some(RuleTag::LowStart)
        } else if visits.iter().filter(|v| v.2 < config.high).count() < config.min_below {
            Some(RuleTag::NeverRemitted)
        } else if visits.len() < config.min_obs {
            Some(RuleTag::TooShort)
        } else {
            None
        };
        if let Some(rule) = drop_rule {
            report.dropped.push(DroppedTrajectory { id: traj.id, rule });
            continue;
        }

        let dates = visits.iter().map(|v| v.1).collect();
        let values = visits.iter().map(|v| v.2).collect();
        let cleaned = Trajectory::new(&traj.id, dates, values, traj.truth)
            .expect("subsequence of a valid trajectory is valid");
        kept.push(cleaned);
    }

    report.trajectories_after = kept.len();
    report.observations_after = kept.iter().map(Trajectory::len).sum();
    (kept, report)
}

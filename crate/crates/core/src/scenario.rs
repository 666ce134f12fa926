//! Built-in simulation study presets.
//!
//! Each scenario fixes the model at its base parameterization and sweeps
//! one dial: the visit interval (I), the noise level (II), or the cohort
//! size (III). The `a` variants rerun the same sweeps with an
//! earlier-relapse duration law (shape 1.50, scale 2500).

use std::fmt;
use std::str::FromStr;

use crate::pdmp::ModelParams;
use crate::simulate::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    I,
    II,
    III,
    Ia,
    IIa,
    IIIa,
}

pub const DEFAULT_BATCHES: usize = 100;
pub const DEFAULT_COHORT_SIZE: usize = 500;

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::I,
        Scenario::II,
        Scenario::III,
        Scenario::Ia,
        Scenario::IIa,
        Scenario::IIIa,
    ];

    /// Model parameters before the sweep is applied.
    pub fn params(self) -> ModelParams {
        let mut params = ModelParams::default();
        if matches!(self, Scenario::Ia | Scenario::IIa | Scenario::IIIa) {
            params.alpha = 1.50;
            params.beta = 2500.0;
        }
        params
    }

    /// Name of the swept parameter, as used in summary CSVs.
    pub fn sweep_parameter(self) -> &'static str {
        match self {
            Scenario::I | Scenario::Ia => "delta",
            Scenario::II | Scenario::IIa => "sigma",
            Scenario::III | Scenario::IIIa => "n",
        }
    }

    /// Grid of swept values.
    pub fn sweep_values(self) -> Vec<f64> {
        match self {
            Scenario::I | Scenario::Ia => vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            Scenario::II | Scenario::IIa => vec![0.25, 1.0, 2.5, 5.0],
            Scenario::III | Scenario::IIIa => vec![250.0, 500.0, 1000.0, 5000.0, 10000.0],
        }
    }

    /// One simulation config per grid value.
    pub fn settings(self, master_seed: u64, n_batches: usize) -> Vec<(f64, ScenarioConfig)> {
        self.sweep_values()
            .into_iter()
            .map(|value| {
                let mut params = self.params();
                let mut n_trajectories = DEFAULT_COHORT_SIZE;
                match self.sweep_parameter() {
                    "delta" => params.delta = value,
                    "sigma" => params.sigma = value,
                    _ => n_trajectories = value as usize,
                }
                (
                    value,
                    ScenarioConfig {
                        n_trajectories,
                        n_batches,
                        master_seed,
                        params,
                    },
                )
            })
            .collect()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scenario::I => "I",
            Scenario::II => "II",
            Scenario::III => "III",
            Scenario::Ia => "Ia",
            Scenario::IIa => "IIa",
            Scenario::IIIa => "IIIa",
        };
        f.write_str(name)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "i" => Ok(Scenario::I),
            "ii" => Ok(Scenario::II),
            "iii" => Ok(Scenario::III),
            "ia" => Ok(Scenario::Ia),
            "iia" => Ok(Scenario::IIa),
            "iiia" => Ok(Scenario::IIIa),
            other => Err(format!(
                "unknown scenario `{other}` (expected one of I, II, III, Ia, IIa, IIIa)"
            )),
        }
    }
}

//! Experiment configuration, read from TOML with one section per concern.

use std::path::{Path, PathBuf};

use blindfield::experiments::circles::CirclesParams;
use blindfield::experiments::concentration::{DimensionParams, InverseGammaParams, ProximityParams};
use blindfield::experiments::decompose::DecomposeParams;
use blindfield::experiments::energy_map::EnergyMapParams;
use blindfield::experiments::stability::StabilityParams;
use blindfield::sampler::{EqmDynamics, Integrator, Mode, SamplerConfig};
use blindfield::{DataSupport, Preset, Schedule, ScheduleParams, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule: ScheduleSection,
    pub support: SupportSection,
    pub grid: GridSection,
    pub sampler: SamplerSection,
    pub output: OutputSection,
    pub energy_map: EnergyMapParams,
    pub stability: StabilitySection,
    pub circles: CirclesParams,
    pub concentration: ConcentrationSection,
    pub decompose: DecomposeParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub preset: Preset,
    pub t_min: f64,
    pub sigma_max: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let p = ScheduleParams::default();
        Self {
            preset: Preset::Fm,
            t_min: p.t_min,
            sigma_max: p.sigma_max,
        }
    }
}

impl ScheduleSection {
    pub fn params(&self) -> ScheduleParams {
        ScheduleParams {
            t_min: self.t_min,
            sigma_max: self.sigma_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SupportSection {
    Circles {
        n_per_ring: usize,
        radii: Vec<f64>,
        ambient_dim: usize,
        seed: u64,
    },
    Explicit {
        points: Vec<Vec<f64>>,
    },
    Csv {
        path: PathBuf,
    },
}

impl Default for SupportSection {
    fn default() -> Self {
        Self::Circles {
            n_per_ring: 64,
            radii: vec![0.5, 1.0],
            ambient_dim: 2,
            seed: 7,
        }
    }
}

impl SupportSection {
    pub fn build(&self) -> blindfield::Result<DataSupport> {
        match self {
            Self::Circles {
                n_per_ring,
                radii,
                ambient_dim,
                seed,
            } => DataSupport::make_circles(*n_per_ring, radii, *ambient_dim, *seed),
            Self::Explicit { points } => DataSupport::from_rows(points),
            Self::Csv { path } => DataSupport::load_csv(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Defaults to the schedule's `t_min` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    pub m_uniform: usize,
    pub m_log: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_min: None,
            m_uniform: 512,
            m_log: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub n_steps: usize,
    pub integrator: Integrator,
    pub mode: Mode,
    pub eqm_dynamics: EqmDynamics,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let c = SamplerConfig::default();
        Self {
            n_steps: c.n_steps,
            integrator: c.integrator,
            mode: c.mode,
            eqm_dynamics: c.eqm_dynamics,
            n_samples: 1000,
            seed: 0,
        }
    }
}

impl SamplerSection {
    pub fn config(&self) -> SamplerConfig {
        SamplerConfig {
            n_steps: self.n_steps,
            integrator: self.integrator,
            mode: self.mode,
            eqm_dynamics: self.eqm_dynamics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub presets: Vec<Preset>,
    pub probe: StabilityParams,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            presets: Preset::ALL.to_vec(),
            probe: StabilityParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationSection {
    pub proximity: ProximityParams,
    pub dimension: DimensionParams,
    pub inverse_gamma: InverseGammaParams,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn schedule(&self) -> blindfield::Result<Schedule> {
        Schedule::preset(self.schedule.preset, &self.schedule.params())
    }

    pub fn grid(&self) -> blindfield::Result<TimeGrid> {
        TimeGrid::new(
            self.grid.t_min.unwrap_or(self.schedule.t_min),
            self.grid.m_uniform,
            self.grid.m_log,
        )
    }
}

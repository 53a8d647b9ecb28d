//! Sampling the embedded concentric circles at several ambient dimensions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::FieldModel;
use crate::grid::TimeGrid;
use crate::sampler::{Mode, Sampler, SamplerConfig};
use crate::schedule::{Preset, Schedule, ScheduleParams};
use crate::support::{DataSupport, Embedding};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirclesParams {
    pub n_per_ring: usize,
    pub radii: Vec<f64>,
    pub dims: Vec<usize>,
    pub presets: Vec<Preset>,
    pub modes: Vec<Mode>,
    /// Not part of the serialized form; callers with a sampler section of
    /// their own set it from there.
    #[serde(skip)]
    pub n_samples: usize,
    /// Seed of the random embedding.
    pub support_seed: u64,
}

impl Default for CirclesParams {
    fn default() -> Self {
        Self {
            n_per_ring: 256,
            radii: vec![0.5, 1.0],
            dims: vec![2, 8, 32, 128],
            presets: Preset::ALL.to_vec(),
            modes: vec![Mode::Autonomous, Mode::Oracle],
            n_samples: 1000,
            support_seed: 7,
        }
    }
}

impl CirclesParams {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.presets.is_empty() || self.modes.is_empty() {
            return Err(invalid("circles needs at least one dimension, preset and mode"));
        }
        if self.n_samples == 0 {
            return Err(invalid("circles needs n_samples >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CirclesMetric {
    pub dim: usize,
    pub preset: Preset,
    pub mode: Mode,
    /// Mean `| ||P^T u|| - nearest radius |` over all samples.
    pub ring_error: f64,
    /// The same mean over samples that did not diverge.
    pub ring_error_finite: f64,
    pub n_samples: usize,
    pub n_diverged: usize,
}

#[derive(Clone, Debug)]
pub struct CirclesRun {
    pub metric: CirclesMetric,
    /// Final samples projected onto the data plane, `n x 2`.
    pub projected: Array2<f64>,
}

/// Ring-distance error of every row of `finals`.
pub fn ring_errors(emb: &Embedding, finals: &Array2<f64>) -> Vec<f64> {
    finals.rows().into_iter().map(|u| emb.ring_distance(u)).collect()
}

/// Samples one (support, preset, mode) configuration.
pub fn sample_configuration(
    ds: &DataSupport,
    s: &Schedule,
    grid: &TimeGrid,
    config: SamplerConfig,
    n_samples: usize,
    seed: u64,
) -> Result<CirclesRun> {
    let emb = ds
        .embedding()
        .ok_or_else(|| invalid("ring errors need an embedded circles support"))?;
    let sampler = Sampler::new(FieldModel::new(ds, s, grid), config)?;
    let batch = sampler.sample(n_samples, seed)?;
    let errors = ring_errors(emb, &batch.finals);
    let finite: Vec<f64> = errors
        .iter()
        .zip(&batch.diverged)
        .filter(|(e, d)| !**d && e.is_finite())
        .map(|(e, _)| *e)
        .collect();
    let metric = CirclesMetric {
        dim: ds.ambient_dim(),
        preset: s.preset_kind().unwrap_or(Preset::Fm),
        mode: config.mode,
        ring_error: errors.iter().sum::<f64>() / errors.len() as f64,
        ring_error_finite: if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        n_samples,
        n_diverged: batch.n_diverged(),
    };
    let projected = batch.finals.dot(&emb.projection);
    Ok(CirclesRun { metric, projected })
}

/// Every dimension x preset x mode combination, in that nesting order.
pub fn run_circles(
    params: &CirclesParams,
    schedule_params: &ScheduleParams,
    grid: &TimeGrid,
    sampler: SamplerConfig,
    seed: u64,
) -> Result<Vec<CirclesRun>> {
    params.validate()?;
    let mut runs = Vec::new();
    for &dim in &params.dims {
        let ds = DataSupport::make_circles(params.n_per_ring, &params.radii, dim, params.support_seed)?;
        for &preset in &params.presets {
            let s = Schedule::preset(preset, schedule_params)?;
            for &mode in &params.modes {
                let config = SamplerConfig { mode, ..sampler };
                runs.push(sample_configuration(&ds, &s, grid, config, params.n_samples, seed)?);
            }
        }
    }
    Ok(runs)
}

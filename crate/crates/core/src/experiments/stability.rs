//! Drift-error sweeps for the four parameterizations and their stability
//! verdicts.
//!
//! Every preset is swept with both probe kinds. The verdict reads the probe
//! that matches how each parameterization fails or stays stable: noise
//! prediction is judged at a fixed point near the data, where its `1/b`
//! amplification shows, and the others along the forward process, where a
//! fixed point would make any `1/t` target diverge trivially.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::FieldModel;
use crate::grid::TimeGrid;
use crate::sampler::{drift_error_sweep, DriftErrorRecord, ProbeKind, ProbeSource};
use crate::schedule::{Preset, Schedule, ScheduleParams};
use crate::stats::loglog_slope;
use crate::support::DataSupport;

use super::logspace;

/// Slopes at or above this count as bounded.
pub const BOUNDED_SLOPE: f64 = -0.2;
/// Slopes at or below this count as a `1/t`-type divergence.
pub const DIVERGENT_SLOPE: f64 = -0.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityParams {
    /// Index of the support point the probes start from.
    pub point_index: usize,
    /// Probe direction; defaults to the last coordinate axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    /// Offset of the fixed probe, `||u - x||`.
    pub fixed_eps: f64,
    /// Noise draw scale of the forward probe.
    pub forward_eps: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_t: usize,
    /// Upper end of the range used for slope fits.
    pub fit_t_max: f64,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self {
            point_index: 1,
            direction: None,
            fixed_eps: 0.05,
            forward_eps: 1.0,
            t_lo: 1e-3,
            t_hi: 1.0,
            n_t: 25,
            fit_t_max: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub probe: ProbeKind,
    /// Log-log slope of `delta_v` against `t` over `[t_lo, fit_t_max]`.
    pub slope: f64,
    pub bounded: bool,
    /// `delta_v` never increases as `t` decreases over the fit range.
    pub monotone_toward_t_min: bool,
    /// Max over all `t` divided by the median.
    pub max_over_median: f64,
    /// The same slope for the other probe, for reference.
    pub other_probe_slope: f64,
}

#[derive(Clone, Debug)]
pub struct PresetSweep {
    pub preset: Preset,
    pub forward: Vec<DriftErrorRecord>,
    pub fixed: Vec<DriftErrorRecord>,
    pub verdict: Verdict,
}

/// The probe a preset's verdict is read from.
pub fn verdict_probe(preset: Preset) -> ProbeKind {
    match preset {
        Preset::Ddpm => ProbeKind::Fixed,
        Preset::Edm | Preset::Fm | Preset::Eqm => ProbeKind::Forward,
    }
}

fn fit_slope(records: &[DriftErrorRecord], t_max: f64) -> f64 {
    let (t, dv): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.t <= t_max * (1.0 + 1e-12))
        .map(|r| (r.t, r.delta_v.max(f64::MIN_POSITIVE)))
        .unzip();
    loglog_slope(&t, &dv)
}

fn verdict(preset: Preset, forward: &[DriftErrorRecord], fixed: &[DriftErrorRecord], t_max: f64) -> Verdict {
    let probe = verdict_probe(preset);
    let (used, other) = match probe {
        ProbeKind::Forward => (forward, fixed),
        ProbeKind::Fixed => (fixed, forward),
    };
    let slope = fit_slope(used, t_max);
    let mut in_range: Vec<&DriftErrorRecord> = used.iter().filter(|r| r.t <= t_max * (1.0 + 1e-12)).collect();
    in_range.sort_by(|a, b| a.t.total_cmp(&b.t));
    let monotone_toward_t_min = in_range.windows(2).all(|w| w[0].delta_v <= w[1].delta_v);
    let mut all: Vec<f64> = used.iter().map(|r| r.delta_v).collect();
    all.sort_by(f64::total_cmp);
    let median = if all.len() % 2 == 1 {
        all[all.len() / 2]
    } else {
        0.5 * (all[all.len() / 2 - 1] + all[all.len() / 2])
    };
    Verdict {
        probe,
        slope,
        bounded: slope >= BOUNDED_SLOPE,
        monotone_toward_t_min,
        max_over_median: all.last().copied().unwrap_or(f64::NAN) / median,
        other_probe_slope: fit_slope(other, t_max),
    }
}

/// Sweeps every preset in `presets` at shared probe points.
pub fn stability_sweep(
    ds: &DataSupport,
    schedule_params: &ScheduleParams,
    grid: &TimeGrid,
    presets: &[Preset],
    params: &StabilityParams,
) -> Result<Vec<PresetSweep>> {
    if params.point_index >= ds.len() {
        return Err(invalid(format!(
            "point_index {} is out of range for {} points",
            params.point_index,
            ds.len()
        )));
    }
    if !(params.t_lo > 0.0 && params.t_lo < params.t_hi && params.t_hi <= 1.0) || params.n_t < 2 {
        return Err(invalid("stability sweep needs 0 < t_lo < t_hi <= 1 and n_t >= 2"));
    }
    let dim = ds.ambient_dim();
    let direction = match &params.direction {
        Some(d) if d.len() == dim => Array1::from(d.clone()),
        Some(d) => {
            return Err(crate::Error::DimensionMismatch {
                expected: dim,
                found: d.len(),
            })
        }
        None => {
            let mut d = Array1::zeros(dim);
            d[dim - 1] = 1.0;
            d
        }
    };
    let t_list = logspace(params.t_lo, params.t_hi, params.n_t);
    let point = ds.point(params.point_index).to_owned();
    presets
        .iter()
        .map(|&preset| {
            let s = Schedule::preset(preset, schedule_params)?;
            let model = FieldModel::new(ds, &s, grid);
            let probe = |kind, eps| ProbeSource {
                point: point.clone(),
                direction: direction.clone(),
                eps,
                kind,
            };
            let forward = drift_error_sweep(&model, &probe(ProbeKind::Forward, params.forward_eps), &t_list)?;
            let fixed = drift_error_sweep(&model, &probe(ProbeKind::Fixed, params.fixed_eps), &t_list)?;
            let verdict = verdict(preset, &forward, &fixed, params.fit_t_max);
            Ok(PresetSweep {
                preset,
                forward,
                fixed,
                verdict,
            })
        })
        .collect()
}

/// Verdicts keyed by preset name, ready for JSON output.
pub fn verdict_table(sweeps: &[PresetSweep]) -> BTreeMap<String, Verdict> {
    sweeps
        .iter()
        .map(|s| (s.preset.to_string(), s.verdict.clone()))
        .collect()
}

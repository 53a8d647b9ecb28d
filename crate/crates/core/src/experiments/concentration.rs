//! Posterior concentration over noise levels: by proximity to the data, by
//! ambient dimension, and the Inverse-Gamma shape at high codimension.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::FieldModel;
use crate::grid::TimeGrid;
use crate::posterior::{inverse_gamma_fit, sigma_mle, InverseGammaFit};
use crate::schedule::{Schedule, ScheduleParams};
use crate::stats::{mean, sample_variance};
use crate::support::{orthogonal_direction, DataSupport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProximityParams {
    pub point_index: usize,
    /// Offset direction; defaults to the last coordinate axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    pub eps: Vec<f64>,
}

impl Default for ProximityParams {
    fn default() -> Self {
        Self {
            point_index: 0,
            direction: None,
            eps: vec![0.3, 0.1, 0.03, 0.01],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProximityRow {
    pub eps: f64,
    pub mean_t: f64,
    pub var_t: f64,
    pub mean_v: f64,
    pub var_v: f64,
}

/// Posterior moments at `x_k + eps dir` for each `eps`.
pub fn proximity_sweep(model: &FieldModel<'_>, params: &ProximityParams) -> Result<Vec<ProximityRow>> {
    let ds = model.support();
    if params.point_index >= ds.len() {
        return Err(invalid(format!("point_index {} is out of range", params.point_index)));
    }
    let dir = unit_direction(ds.ambient_dim(), params.direction.as_deref())?;
    let x = ds.point(params.point_index);
    params
        .eps
        .iter()
        .map(|&eps| {
            let u = &x + &(eps * &dir);
            let p = model.profile(u.view())?;
            Ok(ProximityRow {
                eps,
                mean_t: p.mean_t,
                var_t: p.var_t,
                mean_v: p.mean_v,
                var_v: p.var_v,
            })
        })
        .collect()
}

fn unit_direction(dim: usize, direction: Option<&[f64]>) -> Result<Array1<f64>> {
    let d = match direction {
        Some(d) if d.len() != dim => {
            return Err(crate::Error::DimensionMismatch {
                expected: dim,
                found: d.len(),
            })
        }
        Some(d) => Array1::from(d.to_vec()),
        None => {
            let mut d = Array1::zeros(dim);
            d[dim - 1] = 1.0;
            d
        }
    };
    let n = d.dot(&d).sqrt();
    if !(n > 0.0) {
        return Err(invalid("direction must be nonzero"));
    }
    Ok(d / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionParams {
    pub dims: Vec<usize>,
    pub n_per_ring: usize,
    pub radii: Vec<f64>,
    pub support_seed: u64,
    /// The true noise level the draws are made at.
    pub t_true: f64,
    /// Draws used for posterior moments and the Jensen gap.
    pub n_profile_draws: usize,
    /// Draws used for the noise-scale estimator, which is much cheaper.
    pub n_sigma_draws: usize,
}

impl Default for DimensionParams {
    fn default() -> Self {
        Self {
            dims: vec![2, 8, 32, 128],
            n_per_ring: 64,
            radii: vec![0.5, 1.0],
            support_seed: 7,
            t_true: 0.5,
            n_profile_draws: 64,
            n_sigma_draws: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionRow {
    pub dim: usize,
    pub mean_var_t: f64,
    pub mean_abs_jensen_gap: f64,
    /// `b(t_true)^2`, the variance the residual estimator targets.
    pub sigma0_sq: f64,
    pub sigma2_mean: f64,
    pub sigma2_std_err: f64,
    pub sigma2_var: f64,
    /// `2 sigma0^4 / (D - d)`.
    pub sigma2_var_predicted: f64,
}

/// `a(t) x + b(t) eps` for a uniformly chosen support point and a standard
/// normal `eps`, drawn from `rng`.
fn forward_draw(ds: &DataSupport, s: &Schedule, t: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let c = s.at(t);
    let k = rng.gen_range(0..ds.len());
    let noise: Array1<f64> = Array1::from_shape_fn(ds.ambient_dim(), |_| rng.sample(StandardNormal));
    c.a * &ds.point(k) + c.b * &noise
}

/// Posterior spread, Jensen gap and noise-scale estimates on the circles
/// support at every dimension in `params.dims`.
pub fn dimension_sweep(
    s: &Schedule,
    grid: &TimeGrid,
    params: &DimensionParams,
    seed: u64,
) -> Result<Vec<DimensionRow>> {
    if !(params.t_true > 0.0 && params.t_true <= 1.0) {
        return Err(invalid("t_true must lie in (0, 1]"));
    }
    if params.n_profile_draws == 0 || params.n_sigma_draws < 2 {
        return Err(invalid("dimension sweep needs n_profile_draws >= 1 and n_sigma_draws >= 2"));
    }
    params
        .dims
        .iter()
        .enumerate()
        .map(|(i, &dim)| {
            let ds = DataSupport::make_circles(params.n_per_ring, &params.radii, dim, params.support_seed)?;
            let model = FieldModel::new(&ds, s, grid);
            let base = seed.wrapping_add(1_000_003 * i as u64);
            let stats: Vec<(f64, f64)> = (0..params.n_profile_draws)
                .into_par_iter()
                .map(|j| {
                    let mut rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(j as u64));
                    let u = forward_draw(&ds, s, params.t_true, &mut rng);
                    let p = model.profile(u.view())?;
                    Ok((p.var_t, model.jensen_gap(u.view(), params.t_true)?.abs()))
                })
                .collect::<Result<_>>()?;
            let sigma0_sq = s.at(params.t_true).b.powi(2);
            let codim = dim.saturating_sub(2);
            let (sigma2_mean, sigma2_std_err, sigma2_var, sigma2_var_predicted) = if codim == 0 {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(base ^ 0x5EED);
                let sig2: Vec<f64> = (0..params.n_sigma_draws)
                    .map(|_| {
                        let u = forward_draw(&ds, s, params.t_true, &mut rng);
                        sigma_mle(&ds, u.view(), Some(2)).map(|x| x * x)
                    })
                    .collect::<Result<_>>()?;
                let var = sample_variance(&sig2);
                (
                    mean(&sig2),
                    (var / sig2.len() as f64).sqrt(),
                    var,
                    2.0 * sigma0_sq * sigma0_sq / codim as f64,
                )
            };
            let (var_t, gap): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
            Ok(DimensionRow {
                dim,
                mean_var_t: mean(&var_t),
                mean_abs_jensen_gap: mean(&gap),
                sigma0_sq,
                sigma2_mean,
                sigma2_std_err,
                sigma2_var,
                sigma2_var_predicted,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseGammaParams {
    pub dim: usize,
    pub n_per_ring: usize,
    pub radii: Vec<f64>,
    pub support_seed: u64,
    pub eps: f64,
    /// The fit needs a grid reaching far below `v = eps^2`.
    pub t_min: f64,
    pub m_uniform: usize,
    pub m_log: usize,
}

impl Default for InverseGammaParams {
    fn default() -> Self {
        Self {
            dim: 128,
            n_per_ring: 64,
            radii: vec![0.5, 1.0],
            support_seed: 7,
            eps: 1e-3,
            t_min: 1e-6,
            m_uniform: 1024,
            m_log: 1024,
        }
    }
}

/// Posterior over `v` at `x + eps n`, `n` normal to the data plane, compared
/// against `IG(k/2 - 1, eps^2/2)` with `k = D - 2`.
pub fn inverse_gamma_report(
    schedule: &Schedule,
    params: &InverseGammaParams,
    seed: u64,
) -> Result<InverseGammaFit> {
    let sp = ScheduleParams {
        t_min: params.t_min,
        ..Default::default()
    };
    let s = match schedule.preset_kind() {
        Some(p) => Schedule::preset(p, &sp)?,
        None => return Err(invalid("inverse-gamma report needs a preset schedule")),
    };
    let grid = TimeGrid::new(params.t_min, params.m_uniform, params.m_log)?;
    let ds = DataSupport::make_circles(params.n_per_ring, &params.radii, params.dim, params.support_seed)?;
    let n = orthogonal_direction(&ds, seed).ok_or(crate::Error::NoCodimension)?;
    let u = &ds.point(0) + &(params.eps * &n);
    let profile = FieldModel::new(&ds, &s, &grid).profile(u.view())?;
    inverse_gamma_fit(&profile, params.dim - 2, params.eps)
}

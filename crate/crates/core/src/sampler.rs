//! Generation by integrating `du/dt = mu(t) u + nu(t) f` from `t = 1` down
//! to `t_min`, with either the oracle conditional target or the autonomous
//! field.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{conditional_target, norm, FieldModel};
use crate::grid::TimeGrid;
use crate::schedule::{Preset, Schedule};
use crate::support::DataSupport;

/// Coordinates beyond this magnitude mark a trajectory as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The conditional target `f_t` at the known noise level.
    Oracle,
    /// The noise-agnostic field `f*`.
    Autonomous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Heun,
}

/// How EqM generates samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EqmDynamics {
    /// The unified schedule ODE, identical to FM for the EqM coefficients.
    ScheduleOde,
    /// `du/ds = -f*(u)` over `s in [0, pseudo_time]`.
    DirectTarget { pseudo_time: f64 },
}

impl Default for EqmDynamics {
    fn default() -> Self {
        Self::ScheduleOde
    }
}

macro_rules! lowercase_enum_str {
    ($ty:ty, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok(Self::$variant),)+
                    _ => Err(invalid(format!("unknown {} `{s}`", stringify!($ty).to_lowercase()))),
                }
            }
        }
    };
}

lowercase_enum_str!(Mode, Oracle => "oracle", Autonomous => "autonomous");
lowercase_enum_str!(Integrator, Euler => "euler", Heun => "heun");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub integrator: Integrator,
    pub mode: Mode,
    pub eqm_dynamics: EqmDynamics,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 200,
            integrator: Integrator::Heun,
            mode: Mode::Autonomous,
            eqm_dynamics: EqmDynamics::ScheduleOde,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(invalid(format!("n_steps must be >= 2, got {}", self.n_steps)));
        }
        if let EqmDynamics::DirectTarget { pseudo_time } = self.eqm_dynamics {
            if !(pseudo_time > 0.0 && pseudo_time.is_finite()) {
                return Err(invalid("pseudo_time must be positive"));
            }
        }
        Ok(())
    }
}

/// States of one integration in generation order.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    /// `(t, u)` pairs. For EqM direct-target runs `t` is the remaining
    /// pseudo-time.
    pub states: Vec<(f64, Array1<f64>)>,
    pub mode: Mode,
    pub schedule_name: String,
    pub n_steps: usize,
    pub integrator: Integrator,
    pub seed: u64,
    /// Set when a state left `[-1e6, 1e6]^D` or became non-finite; the
    /// trajectory then ends at that state.
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &Array1<f64> {
        &self.states.last().expect("a trajectory has at least one state").1
    }
}

/// Final states of a batch of trajectories.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub finals: Array2<f64>,
    pub diverged: Vec<bool>,
}

impl SampleBatch {
    pub fn n_diverged(&self) -> usize {
        self.diverged.iter().filter(|&&d| d).count()
    }
}

/// `a(1) x + b(1) eps` with `x` drawn uniformly from the support. The raw
/// coefficients at `t = 1` are used, so fm/eqm start from pure noise.
pub fn initial_state(ds: &DataSupport, s: &Schedule, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(0..ds.len());
    let eps: Array1<f64> = Array1::from_shape_fn(ds.ambient_dim(), |_| rng.sample(StandardNormal));
    let c = s.raw(1.0);
    c.a * &ds.point(k) + c.b * &eps
}

/// A field model plus integration settings.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    model: FieldModel<'a>,
    config: SamplerConfig,
}

impl<'a> Sampler<'a> {
    pub fn new(model: FieldModel<'a>, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        if matches!(config.eqm_dynamics, EqmDynamics::DirectTarget { .. }) {
            if model.schedule().preset_kind() != Some(Preset::Eqm) {
                return Err(invalid("direct-target dynamics apply to the eqm schedule only"));
            }
            if config.mode != Mode::Autonomous {
                return Err(invalid("direct-target dynamics need the autonomous field"));
            }
        }
        Ok(Self { model, config })
    }

    pub fn model(&self) -> &FieldModel<'a> {
        &self.model
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// `f_t(u)` or `f*(u)` depending on the mode.
    pub fn target(&self, u: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        match self.config.mode {
            Mode::Oracle => conditional_target(self.model.support(), self.model.schedule(), u, t),
            Mode::Autonomous => self.model.autonomous_field(u),
        }
    }

    /// `mu(t) u + nu(t) f`.
    pub fn velocity(&self, u: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
        let (mu, nu) = self.model.schedule().gains().sampler_coefficients(t)?;
        let f = self.target(u, t)?;
        Ok(mu * &u + nu * f)
    }

    fn direct_velocity(&self, u: ArrayView1<f64>, _t: f64) -> Result<Array1<f64>> {
        Ok(-self.model.autonomous_field(u)?)
    }

    /// Integrates one trajectory from `u0`, or from [`initial_state`] with
    /// `seed` when `u0` is `None`.
    pub fn integrate(&self, u0: Option<Array1<f64>>, seed: u64) -> Result<Trajectory> {
        self.run(u0, seed, true)
    }

    fn run(&self, u0: Option<Array1<f64>>, seed: u64, keep_states: bool) -> Result<Trajectory> {
        let ds = self.model.support();
        let s = self.model.schedule();
        let u0 = match u0 {
            Some(u) => {
                ds.check_dim(u.view())?;
                u
            }
            None => initial_state(ds, s, seed),
        };
        let n = self.config.n_steps;
        let (times, direct) = match self.config.eqm_dynamics {
            EqmDynamics::DirectTarget { pseudo_time } if s.preset_kind() == Some(Preset::Eqm) => {
                (step_times(pseudo_time, 0.0, n), true)
            }
            _ => (step_times(1.0, s.t_min(), n), false),
        };

        let mut states = Vec::with_capacity(if keep_states { n + 1 } else { 1 });
        let mut u = u0;
        states.push((times[0], u.clone()));
        let mut diverged = false;
        for w in times.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let dt = if direct { t0 - t1 } else { t1 - t0 };
            let vel = |x: ArrayView1<f64>, t: f64| {
                if direct {
                    self.direct_velocity(x, t)
                } else {
                    self.velocity(x, t)
                }
            };
            let k1 = vel(u.view(), t0)?;
            let next = match self.config.integrator {
                Integrator::Euler => &u + &(dt * &k1),
                Integrator::Heun => {
                    let pred = &u + &(dt * &k1);
                    if is_diverged(&pred) {
                        pred
                    } else {
                        let k2 = vel(pred.view(), t1)?;
                        &u + &(0.5 * dt * (&k1 + &k2))
                    }
                }
            };
            u = next;
            if !keep_states {
                states.clear();
            }
            states.push((t1, u.clone()));
            if is_diverged(&u) {
                diverged = true;
                break;
            }
        }

        Ok(Trajectory {
            states,
            mode: self.config.mode,
            schedule_name: s.name().to_string(),
            n_steps: n,
            integrator: self.config.integrator,
            seed,
            diverged,
        })
    }

    /// Runs `n_samples` trajectories with seeds `seed + i` and keeps the final
    /// states. The result does not depend on the number of worker threads.
    pub fn sample(&self, n_samples: usize, seed: u64) -> Result<SampleBatch> {
        let runs = (0..n_samples)
            .into_par_iter()
            .map(|i| self.run(None, seed.wrapping_add(i as u64), false))
            .collect::<Result<Vec<_>>>()?;
        let dim = self.model.support().ambient_dim();
        let mut finals = Array2::zeros((n_samples, dim));
        let mut diverged = Vec::with_capacity(n_samples);
        for (mut row, tr) in finals.rows_mut().into_iter().zip(&runs) {
            row.assign(tr.final_state());
            diverged.push(tr.diverged);
        }
        Ok(SampleBatch { finals, diverged })
    }
}

fn step_times(start: f64, end: f64, n: usize) -> Vec<f64> {
    let h = (start - end) / n as f64;
    (0..=n)
        .map(|j| if j == n { end } else { start - h * j as f64 })
        .collect()
}

fn is_diverged(u: &Array1<f64>) -> bool {
    u.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_BOUND)
}

/// Velocity of the unified sampler ODE at `(u, t)`.
pub fn sampler_velocity(
    ds: &DataSupport,
    s: &Schedule,
    u: ArrayView1<f64>,
    t: f64,
    mode: Mode,
    grid: &TimeGrid,
) -> Result<Array1<f64>> {
    let config = SamplerConfig {
        mode,
        ..SamplerConfig::default()
    };
    Sampler::new(FieldModel::new(ds, s, grid), config)?.velocity(u, t)
}

/// Integrates one trajectory; see [`Sampler::integrate`].
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    ds: &DataSupport,
    s: &Schedule,
    u0: Option<Array1<f64>>,
    n_steps: usize,
    mode: Mode,
    integrator: Integrator,
    grid: &TimeGrid,
    seed: u64,
) -> Result<Trajectory> {
    let config = SamplerConfig {
        n_steps,
        integrator,
        mode,
        eqm_dynamics: EqmDynamics::ScheduleOde,
    };
    Sampler::new(FieldModel::new(ds, s, grid), config)?.integrate(u0, seed)
}

/// How probe points are placed for a drift-error sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// `u(t) = a(t) x + b(t) eps dir`, following the forward process.
    Forward,
    /// `u = x + eps dir` at every `t`.
    Fixed,
}

#[derive(Clone, Debug)]
pub struct ProbeSource {
    pub point: Array1<f64>,
    /// Normalized on use.
    pub direction: Array1<f64>,
    pub eps: f64,
    pub kind: ProbeKind,
}

impl ProbeSource {
    pub fn at(&self, s: &Schedule, t: f64) -> Array1<f64> {
        let dir = &self.direction / norm(&self.direction.view());
        match self.kind {
            ProbeKind::Forward => {
                let c = s.at(t);
                c.a * &self.point + (c.b * self.eps) * &dir
            }
            ProbeKind::Fixed => &self.point + &(self.eps * &dir),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftErrorRecord {
    pub t: f64,
    pub nu_abs: f64,
    /// `||f*(u) - f_t(u)||`.
    pub est_err: f64,
    /// `nu_abs * est_err`.
    pub delta_v: f64,
}

/// Oracle-versus-autonomous velocity gap `|nu(t)| ||f*(u) - f_t(u)||` along
/// `t_list`.
pub fn drift_error_sweep(model: &FieldModel<'_>, source: &ProbeSource, t_list: &[f64]) -> Result<Vec<DriftErrorRecord>> {
    let ds = model.support();
    let s = model.schedule();
    ds.check_dim(source.point.view())?;
    ds.check_dim(source.direction.view())?;
    if !(norm(&source.direction.view()) > 0.0) {
        return Err(invalid("probe direction must be nonzero"));
    }
    let fixed_field = match source.kind {
        ProbeKind::Fixed => Some(model.autonomous_field(source.at(s, 0.0).view())?),
        ProbeKind::Forward => None,
    };
    t_list
        .iter()
        .map(|&t| {
            let u = source.at(s, t);
            let f_star = match &fixed_field {
                Some(f) => f.clone(),
                None => model.autonomous_field(u.view())?,
            };
            let f_t = conditional_target(ds, s, u.view(), t)?;
            let nu_abs = s.gains().nu(t)?.abs();
            let est_err = norm(&(&f_star - &f_t).view());
            Ok(DriftErrorRecord {
                t,
                nu_abs,
                est_err,
                delta_v: nu_abs * est_err,
            })
        })
        .collect()
}

/// `b(t_true) E_{tau|u}[1/b(tau)] - 1`.
pub fn jensen_gap(ds: &DataSupport, s: &Schedule, u: ArrayView1<f64>, t_true: f64, grid: &TimeGrid) -> Result<f64> {
    FieldModel::new(ds, s, grid).jensen_gap(u, t_true)
}

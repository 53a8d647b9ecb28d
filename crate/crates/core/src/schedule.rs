//! Affine noise schedules `u = a(t) x + b(t) eps` with regression targets
//! `c(t) x + d(t) eps`, and the scalar gains derived from them.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of probe points used to check that a custom `b(t)` is increasing.
const MONOTONE_PROBES: usize = 1024;
/// Step for central differencing of custom coefficients without derivatives.
const CUSTOM_FD_STEP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Variance preserving noise prediction, cosine `alpha_bar`.
    Ddpm,
    /// Signal prediction with `sigma(t) = sigma_max * t`.
    Edm,
    /// Flow matching velocity prediction.
    Fm,
    /// Equilibrium matching.
    Eqm,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Ddpm, Preset::Edm, Preset::Fm, Preset::Eqm];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Ddpm => "ddpm",
            Preset::Edm => "edm",
            Preset::Fm => "fm",
            Preset::Eqm => "eqm",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddpm" => Ok(Preset::Ddpm),
            "edm" => Ok(Preset::Edm),
            "fm" => Ok(Preset::Fm),
            "eqm" => Ok(Preset::Eqm),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

/// Parameters shared by all presets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    /// Lower truncation of the noise level.
    pub t_min: f64,
    /// Terminal noise scale of the EDM preset.
    pub sigma_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            t_min: 1e-4,
            sigma_max: 2.0,
        }
    }
}

/// Coefficient values and their time derivatives at one `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub a_dot: f64,
    pub b_dot: f64,
    pub c_dot: f64,
    pub d_dot: f64,
}

impl Coefficients {
    /// `a d - b c`, the determinant of the (observation, target) system.
    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User supplied coefficient closures.
///
/// When `derivatives` is `None` the time derivatives are taken by central
/// differences with step `1e-7`, and the schedule reports
/// [`Schedule::has_approximate_derivatives`].
#[derive(Clone)]
pub struct CustomCoefficients {
    pub a: ScalarFn,
    pub b: ScalarFn,
    pub c: ScalarFn,
    pub d: ScalarFn,
    /// `[a_dot, b_dot, c_dot, d_dot]`.
    pub derivatives: Option<[ScalarFn; 4]>,
}

#[derive(Clone)]
enum Kind {
    Preset(Preset),
    Custom(CustomCoefficients),
}

/// An affine noise schedule.
///
/// [`Schedule::raw`] evaluates the coefficient formulas as given;
/// everything else clamps `t` into `[t_min, t_max]`. `t_max` is `1 - t_min`
/// for schedules whose signal coefficient vanishes at `t = 1`, since the
/// gains and the sampler coefficients divide by `a(t)`.
#[derive(Clone)]
pub struct Schedule {
    name: String,
    kind: Kind,
    sigma_max: f64,
    t_min: f64,
    t_max: f64,
    approximate_derivatives: bool,
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Schedule")
            .field("name", &self.name)
            .field("t_min", &self.t_min)
            .field("t_max", &self.t_max)
            .finish()
    }
}

fn check_t_min(t_min: f64) -> Result<()> {
    if !(t_min > 0.0 && t_min < 0.5) {
        return Err(crate::error::invalid(format!(
            "t_min must lie in (0, 0.5), got {t_min}"
        )));
    }
    Ok(())
}

impl Schedule {
    /// Builds a preset schedule by name (`ddpm`, `edm`, `fm`, `eqm`).
    pub fn make(name: &str, params: &ScheduleParams) -> Result<Self> {
        Self::preset(name.parse()?, params)
    }

    pub fn preset(preset: Preset, params: &ScheduleParams) -> Result<Self> {
        check_t_min(params.t_min)?;
        if preset == Preset::Edm && !(params.sigma_max > 0.0) {
            return Err(crate::error::invalid("sigma_max must be positive"));
        }
        let t_max = match preset {
            Preset::Edm => 1.0,
            Preset::Ddpm | Preset::Fm | Preset::Eqm => 1.0 - params.t_min,
        };
        Ok(Self {
            name: preset.as_str().to_string(),
            kind: Kind::Preset(preset),
            sigma_max: params.sigma_max,
            t_min: params.t_min,
            t_max,
            approximate_derivatives: false,
        })
    }

    /// Builds a schedule from closures. `b` must be positive and strictly
    /// increasing on `[t_min, 1]`; this is checked on 1024 points.
    pub fn custom(name: &str, coeffs: CustomCoefficients, t_min: f64) -> Result<Self> {
        check_t_min(t_min)?;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..MONOTONE_PROBES {
            let t = t_min + (1.0 - t_min) * i as f64 / (MONOTONE_PROBES - 1) as f64;
            let b = (coeffs.b)(t);
            if !(b > 0.0) || !(b > prev) {
                return Err(Error::NonMonotoneSchedule { t });
            }
            prev = b;
        }
        let t_max = if (coeffs.a)(1.0).abs() < 1e-12 {
            1.0 - t_min
        } else {
            1.0
        };
        let approximate_derivatives = coeffs.derivatives.is_none();
        Ok(Self {
            name: name.to_string(),
            kind: Kind::Custom(coeffs),
            sigma_max: 0.0,
            t_min,
            t_max,
            approximate_derivatives,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn preset_kind(&self) -> Option<Preset> {
        match self.kind {
            Kind::Preset(p) => Some(p),
            Kind::Custom(_) => None,
        }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn has_approximate_derivatives(&self) -> bool {
        self.approximate_derivatives
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }

    /// Coefficients at `t` without clamping.
    pub fn raw(&self, t: f64) -> Coefficients {
        match &self.kind {
            Kind::Preset(p) => preset_coefficients(*p, self.sigma_max, t),
            Kind::Custom(cc) => custom_coefficients(cc, t),
        }
    }

    /// Coefficients at `t` clamped into `[t_min, t_max]`.
    pub fn at(&self, t: f64) -> Coefficients {
        self.raw(self.clamp(t))
    }

    /// `1 - a(t)` at clamped `t`, without cancellation for the presets.
    pub fn one_minus_a(&self, t: f64) -> f64 {
        let t = self.clamp(t);
        match &self.kind {
            Kind::Preset(Preset::Fm | Preset::Eqm) => t,
            Kind::Preset(Preset::Edm) => 0.0,
            Kind::Preset(Preset::Ddpm) => {
                let s = (0.5 * FRAC_PI_2 * t).sin();
                2.0 * s * s
            }
            Kind::Custom(cc) => 1.0 - (cc.a)(t),
        }
    }

    pub fn gains(&self) -> ScheduleGains<'_> {
        ScheduleGains { schedule: self }
    }

    /// Leading power `p` of `lambda(t) ~ t^p` as `t -> 0`.
    pub fn gain_order(&self) -> i32 {
        match self.kind {
            Kind::Preset(Preset::Eqm | Preset::Edm) => 2,
            _ => 1,
        }
    }
}

fn preset_coefficients(p: Preset, sigma_max: f64, t: f64) -> Coefficients {
    match p {
        Preset::Ddpm => {
            // alpha_bar(t) = cos^2(pi t / 2)
            let (s, c) = (FRAC_PI_2 * t).sin_cos();
            Coefficients {
                a: c,
                b: s,
                c: 0.0,
                d: 1.0,
                a_dot: -FRAC_PI_2 * s,
                b_dot: FRAC_PI_2 * c,
                c_dot: 0.0,
                d_dot: 0.0,
            }
        }
        Preset::Edm => Coefficients {
            a: 1.0,
            b: sigma_max * t,
            c: 1.0,
            d: 0.0,
            a_dot: 0.0,
            b_dot: sigma_max,
            c_dot: 0.0,
            d_dot: 0.0,
        },
        Preset::Fm => Coefficients {
            a: 1.0 - t,
            b: t,
            c: -1.0,
            d: 1.0,
            a_dot: -1.0,
            b_dot: 1.0,
            c_dot: 0.0,
            d_dot: 0.0,
        },
        Preset::Eqm => Coefficients {
            a: 1.0 - t,
            b: t,
            c: -t,
            d: t,
            a_dot: -1.0,
            b_dot: 1.0,
            c_dot: -1.0,
            d_dot: 1.0,
        },
    }
}

fn central_difference(f: &ScalarFn, t: f64) -> f64 {
    let h = CUSTOM_FD_STEP;
    (f(t + h) - f(t - h)) / (2.0 * h)
}

fn custom_coefficients(cc: &CustomCoefficients, t: f64) -> Coefficients {
    let (a_dot, b_dot, c_dot, d_dot) = match &cc.derivatives {
        Some([da, db, dc, dd]) => (da(t), db(t), dc(t), dd(t)),
        None => (
            central_difference(&cc.a, t),
            central_difference(&cc.b, t),
            central_difference(&cc.c, t),
            central_difference(&cc.d, t),
        ),
    };
    Coefficients {
        a: (cc.a)(t),
        b: (cc.b)(t),
        c: (cc.c)(t),
        d: (cc.d)(t),
        a_dot,
        b_dot,
        c_dot,
        d_dot,
    }
}

/// Closed-form scalar gains of a schedule. All methods clamp `t`.
#[derive(Clone, Copy, Debug)]
pub struct ScheduleGains<'a> {
    schedule: &'a Schedule,
}

impl ScheduleGains<'_> {
    /// Effective gradient gain `(b / a)(d a - c b)`.
    pub fn lambda(&self, t: f64) -> f64 {
        let k = self.schedule.at(t);
        k.b / k.a * (k.d * k.a - k.c * k.b)
    }

    /// Sampler drift coefficient `(a' d - b' c) / (a d - b c)`.
    pub fn mu(&self, t: f64) -> Result<f64> {
        let k = self.schedule.at(t);
        let det = nonsingular(k.det(), self.schedule.clamp(t))?;
        Ok((k.a_dot * k.d - k.b_dot * k.c) / det)
    }

    /// Sampler gain `(b' a - a' b) / (a d - b c)`.
    pub fn nu(&self, t: f64) -> Result<f64> {
        let k = self.schedule.at(t);
        let det = nonsingular(k.det(), self.schedule.clamp(t))?;
        Ok((k.b_dot * k.a - k.a_dot * k.b) / det)
    }

    /// `(mu, nu)` in one evaluation.
    pub fn sampler_coefficients(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.schedule.at(t);
        let det = nonsingular(k.det(), self.schedule.clamp(t))?;
        Ok((
            (k.a_dot * k.d - k.b_dot * k.c) / det,
            (k.b_dot * k.a - k.a_dot * k.b) / det,
        ))
    }

    pub fn c_scale(&self, t: f64) -> f64 {
        let k = self.schedule.at(t);
        k.c / k.a
    }

    pub fn snr(&self, t: f64) -> f64 {
        let k = self.schedule.at(t);
        k.a * k.a / (k.b * k.b)
    }
}

fn nonsingular(det: f64, t: f64) -> Result<f64> {
    if det == 0.0 || !det.is_finite() {
        Err(Error::SingularSampler { t })
    } else {
        Ok(det)
    }
}

/// `lambda(t) / t^p` with `p` the schedule's [`Schedule::gain_order`]:
/// `lambda / t` for fm-like schedules and `lambda / t^2` for eqm.
pub fn asymptotic_gain_ratio(s: &Schedule, t: f64) -> f64 {
    s.gains().lambda(t) / t.powi(s.gain_order())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn preset(p: Preset) -> Schedule {
        Schedule::preset(p, &ScheduleParams::default()).unwrap()
    }

    #[test]
    fn fm_row() {
        let k = preset(Preset::Fm).raw(0.25);
        assert_eq!((k.a, k.b, k.c, k.d), (0.75, 0.25, -1.0, 1.0));
    }

    #[test]
    fn eqm_row() {
        let k = preset(Preset::Eqm).raw(0.5);
        assert_eq!((k.a, k.b, k.c, k.d), (0.5, 0.5, -0.5, 0.5));
    }

    #[test]
    fn ddpm_boundary_before_clamping() {
        let k = preset(Preset::Ddpm).raw(0.0);
        assert_eq!(k.a, 1.0);
        assert_eq!(k.b, 0.0);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(matches!(
            Schedule::make("vp-sde", &ScheduleParams::default()),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn non_monotone_custom_is_rejected() {
        let cc = CustomCoefficients {
            a: Arc::new(|t| 1.0 - t),
            b: Arc::new(|t| (std::f64::consts::PI * t).sin()),
            c: Arc::new(|_| -1.0),
            d: Arc::new(|_| 1.0),
            derivatives: None,
        };
        assert!(matches!(
            Schedule::custom("bump", cc, 1e-4),
            Err(Error::NonMonotoneSchedule { .. })
        ));
    }

    #[test]
    fn custom_fd_derivatives_match_fm() {
        let cc = CustomCoefficients {
            a: Arc::new(|t| 1.0 - t),
            b: Arc::new(|t| t),
            c: Arc::new(|_| -1.0),
            d: Arc::new(|_| 1.0),
            derivatives: None,
        };
        let s = Schedule::custom("fm-copy", cc, 1e-4).unwrap();
        assert!(s.has_approximate_derivatives());
        let k = s.at(0.3);
        assert_relative_eq!(k.a_dot, -1.0, epsilon = 1e-7);
        assert_relative_eq!(k.b_dot, 1.0, epsilon = 1e-7);
        assert_relative_eq!(s.gains().nu(0.3).unwrap(), 1.0, epsilon = 1e-7);
        assert_eq!(s.t_max(), 1.0 - 1e-4);
    }

    #[test]
    fn gain_examples() {
        let fm = preset(Preset::Fm);
        assert_relative_eq!(fm.gains().lambda(0.5), 1.0, epsilon = 1e-15);
        for t in [1e-3, 0.1, 0.5, 0.9] {
            assert_relative_eq!(fm.gains().nu(t).unwrap(), 1.0, epsilon = 1e-15);
            assert_eq!(fm.gains().mu(t).unwrap(), 0.0);
        }
        let eqm = preset(Preset::Eqm);
        assert_relative_eq!(eqm.gains().lambda(0.1), 0.01 / 0.9, max_relative = 1e-14);
    }

    #[test]
    fn asymptotic_ratio_examples() {
        let fm = preset(Preset::Fm);
        let eqm = preset(Preset::Eqm);
        assert_relative_eq!(asymptotic_gain_ratio(&fm, 1e-3), 1.0 / 0.999, max_relative = 1e-12);
        assert_relative_eq!(asymptotic_gain_ratio(&eqm, 1e-3), 1.0 / 0.999, max_relative = 1e-12);
        assert_relative_eq!(asymptotic_gain_ratio(&fm, 1e-4), 1.0, epsilon = 2e-4);
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for p in Preset::ALL {
            let s = preset(p);
            for _ in 0..256 {
                // stay a step inside the interval so both stencil points exist
                let t = rng.gen_range(s.t_min() + h..1.0 - h);
                let k = s.raw(t);
                let (kp, km) = (s.raw(t + h), s.raw(t - h));
                let pairs = [
                    (k.a_dot, (kp.a - km.a) / (2.0 * h)),
                    (k.b_dot, (kp.b - km.b) / (2.0 * h)),
                    (k.c_dot, (kp.c - km.c) / (2.0 * h)),
                    (k.d_dot, (kp.d - km.d) / (2.0 * h)),
                ];
                for (exact, fd) in pairs {
                    let err = (exact - fd).abs() / exact.abs().max(1.0);
                    assert!(err <= 1e-6, "{p} t={t}: {exact} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn determinant_and_variance_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (fm, eqm, ddpm) = (preset(Preset::Fm), preset(Preset::Eqm), preset(Preset::Ddpm));
        for _ in 0..256 {
            let t = rng.gen_range(1e-4..1.0);
            assert_relative_eq!(fm.raw(t).det(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(eqm.raw(t).det(), t, epsilon = 1e-12);
            let k = ddpm.raw(t);
            assert_relative_eq!(k.a * k.a + k.b * k.b, 1.0, epsilon = 1e-12);
            for s in [&fm, &eqm] {
                let k = s.raw(t);
                assert_relative_eq!(k.a + k.b, 1.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn lambda_sign() {
        for p in [Preset::Ddpm, Preset::Fm, Preset::Eqm] {
            let s = preset(p);
            for i in 1..200 {
                let t = i as f64 / 200.0;
                assert!(s.gains().lambda(t) > 0.0, "{p} at {t}");
            }
        }
        // d = 0 for EDM, so its gain is -sigma^2
        let edm = preset(Preset::Edm);
        assert_relative_eq!(edm.gains().lambda(0.5), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn clamping_and_one_minus_a() {
        let ddpm = preset(Preset::Ddpm);
        assert_eq!(ddpm.clamp(0.0), 1e-4);
        assert_eq!(ddpm.clamp(1.0), 1.0 - 1e-4);
        assert!(ddpm.gains().nu(1.0).unwrap().is_finite());
        for t in [1e-4, 1e-3, 0.3, 0.9] {
            assert_relative_eq!(ddpm.one_minus_a(t), 1.0 - ddpm.at(t).a, epsilon = 1e-15);
        }
        let edm = preset(Preset::Edm);
        assert_eq!(edm.t_max(), 1.0);
    }
}

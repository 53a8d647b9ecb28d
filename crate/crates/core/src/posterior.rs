//! Posterior over the noise level given one noisy observation.

use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::mixture::{Anchor, Joint, NodeTable};
use crate::schedule::Schedule;
use crate::stats::logsumexp;
use crate::support::DataSupport;

/// Share of posterior mass on one node above which the grid is considered
/// too coarse to resolve the posterior.
const SINGLE_NODE_MASS: f64 = 0.999;

/// `ln[(1/N) sum_k N(u; a(t) x_k, b(t)^2 I)]`, evaluated in log space.
/// `t` is clamped into the schedule's range.
pub fn log_likelihood(ds: &DataSupport, s: &Schedule, u: ArrayView1<f64>, t: f64) -> Result<f64> {
    ds.check_dim(u)?;
    let k = s.at(t);
    let one_minus_a = s.one_minus_a(t);
    let anchor = Anchor::new(ds, u);
    let b2 = k.b * k.b;
    let logits: Vec<f64> = (0..ds.len())
        .map(|j| -anchor.sq_dist(j, one_minus_a) / (2.0 * b2))
        .collect();
    let dim = ds.ambient_dim() as f64;
    Ok(logsumexp(&logits) - (ds.len() as f64).ln() - 0.5 * dim * (TAU * b2).ln())
}

/// Discretized `p(t | u)` on a time grid, with moments in `t` and `v = b^2`.
#[derive(Clone, Debug, Serialize)]
pub struct PosteriorProfile {
    pub t: Vec<f64>,
    /// `b(t_i)^2`.
    pub v: Vec<f64>,
    /// `dv/dt = 2 b b'` at each node.
    pub dv_dt: Vec<f64>,
    /// Quadrature weights of the grid.
    pub weights: Vec<f64>,
    /// `ln p(u | t_i) + ln p(t_i)`, unnormalized.
    pub log_joint: Vec<f64>,
    pub log_evidence: f64,
    /// Normalized masses `p(t_i | u) w_i`.
    pub probs: Vec<f64>,
    pub mean_t: f64,
    pub var_t: f64,
    pub mean_v: f64,
    pub var_v: f64,
    /// Set when more than 99.9% of the mass sits on one node.
    pub single_node_warning: bool,
}

impl PosteriorProfile {
    pub(crate) fn from_joint(grid: &TimeGrid, s: &Schedule, joint: &Joint) -> Self {
        let t = grid.nodes().to_vec();
        let mut v = Vec::with_capacity(t.len());
        let mut dv_dt = Vec::with_capacity(t.len());
        for &ti in &t {
            let k = s.at(ti);
            v.push(k.b * k.b);
            dv_dt.push(2.0 * k.b * k.b_dot);
        }
        let probs = joint.probs.clone();
        let (mean_t, var_t) = weighted_moments(&probs, &t);
        let (mean_v, var_v) = weighted_moments(&probs, &v);
        let single_node_warning = probs.len() > 1 && probs.iter().any(|&p| p > SINGLE_NODE_MASS);
        Self {
            t,
            v,
            dv_dt,
            weights: grid.weights().to_vec(),
            log_joint: joint.log_joint.clone(),
            log_evidence: joint.log_evidence,
            probs,
            mean_t,
            var_t,
            mean_v,
            var_v,
            single_node_warning,
        }
    }
}

fn weighted_moments(p: &[f64], x: &[f64]) -> (f64, f64) {
    let mean: f64 = p.iter().zip(x).map(|(p, x)| p * x).sum();
    let var: f64 = p.iter().zip(x).map(|(p, x)| p * (x - mean) * (x - mean)).sum();
    (mean, var)
}

/// Posterior over the grid under a uniform prior on `[t_min, 1]`.
pub fn posterior_profile(
    ds: &DataSupport,
    s: &Schedule,
    u: ArrayView1<f64>,
    grid: &TimeGrid,
) -> Result<PosteriorProfile> {
    ds.check_dim(u)?;
    let table = NodeTable::new(ds, s, grid);
    let anchor = Anchor::new(ds, u);
    let joint = Joint::new(&table, &anchor, true);
    Ok(PosteriorProfile::from_joint(grid, s, &joint))
}

/// [`posterior_profile`] for every row of `us`, evaluated in parallel.
pub fn posterior_profiles(
    ds: &DataSupport,
    s: &Schedule,
    us: &Array2<f64>,
    grid: &TimeGrid,
) -> Result<Vec<PosteriorProfile>> {
    if us.ncols() != ds.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.ambient_dim(),
            found: us.ncols(),
        });
    }
    let table = NodeTable::new(ds, s, grid);
    let rows: Vec<_> = us.rows().into_iter().collect();
    Ok(rows
        .into_par_iter()
        .map(|u| {
            let anchor = Anchor::new(ds, u);
            let joint = Joint::new(&table, &anchor, true);
            PosteriorProfile::from_joint(grid, s, &joint)
        })
        .collect())
}

/// `r / sqrt(D - d)` for a residual norm `r` off a `d`-dimensional subspace.
pub fn sigma_hat(residual: f64, ambient_dim: usize, intrinsic_dim: usize) -> Result<f64> {
    if intrinsic_dim >= ambient_dim {
        return Err(Error::NoCodimension);
    }
    Ok(residual / ((ambient_dim - intrinsic_dim) as f64).sqrt())
}

/// Noise-scale estimate from the residual of `u` off the data.
///
/// Embedded supports use the residual off the embedding plane and default
/// to `d = 2`. Other supports use the distance to the nearest point and
/// default to `d = 0`.
pub fn sigma_mle(ds: &DataSupport, u: ArrayView1<f64>, intrinsic_dim: Option<usize>) -> Result<f64> {
    ds.check_dim(u)?;
    let (r, d) = match ds.embedding() {
        Some(emb) => (emb.residual_norm(u), intrinsic_dim.unwrap_or(2)),
        None => (ds.nearest_point(u)?.1, intrinsic_dim.unwrap_or(0)),
    };
    sigma_hat(r, ds.ambient_dim(), d)
}

/// Comparison of the posterior over `v = b^2` with `IG(k/2 - 1, eps^2/2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum InverseGammaFit {
    NotApplicable {
        codim: usize,
    },
    Fit {
        codim: usize,
        eps: f64,
        shape: f64,
        scale: f64,
        /// Total-variation distance between the two discretized laws.
        tv_distance: f64,
        posterior_mean_v: f64,
        inverse_gamma_mean_v: f64,
    },
}

impl InverseGammaFit {
    pub fn tv_distance(&self) -> Option<f64> {
        match self {
            Self::Fit { tv_distance, .. } => Some(*tv_distance),
            Self::NotApplicable { .. } => None,
        }
    }
}

/// Log density of `IG(shape, scale)`, evaluated in log space throughout:
/// forming the density first overflows for small scales and large shapes.
fn inverse_gamma_ln_pdf(v: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * v.ln() - scale / v
}

/// Discretizes the Inverse-Gamma law on the profile's grid (density in `v`
/// times the Jacobian `dv/dt` times the quadrature weight) and measures its
/// total-variation distance to the posterior masses.
pub fn inverse_gamma_fit(profile: &PosteriorProfile, codim: usize, eps: f64) -> Result<InverseGammaFit> {
    if codim <= 2 {
        return Ok(InverseGammaFit::NotApplicable { codim });
    }
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let shape = codim as f64 / 2.0 - 1.0;
    let scale = eps * eps / 2.0;
    let log_q: Vec<f64> = profile
        .v
        .iter()
        .zip(&profile.dv_dt)
        .zip(&profile.weights)
        .map(|((&v, &j), &w)| {
            if v > 0.0 && j > 0.0 {
                inverse_gamma_ln_pdf(v, shape, scale) + j.ln() + w.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let z = logsumexp(&log_q);
    let tv = 0.5
        * profile
            .probs
            .iter()
            .zip(&log_q)
            .map(|(p, lq)| (p - (lq - z).exp()).abs())
            .sum::<f64>();
    let inverse_gamma_mean_v = if shape > 1.0 { scale / (shape - 1.0) } else { f64::INFINITY };
    Ok(InverseGammaFit::Fit {
        codim,
        eps,
        shape,
        scale,
        tv_distance: tv,
        posterior_mean_v: profile.mean_v,
        inverse_gamma_mean_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Preset, ScheduleParams};
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn sched(p: Preset) -> Schedule {
        Schedule::preset(p, &ScheduleParams::default()).unwrap()
    }

    fn two_point() -> DataSupport {
        DataSupport::from_rows(&[vec![-1.0], vec![1.0]]).unwrap()
    }

    /// `{-e1, +e1}` in `R^3`: the smallest setting where proximity to a
    /// point concentrates the posterior.
    fn two_point_3d() -> DataSupport {
        DataSupport::from_rows(&[vec![-1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn standard_normal_mode() {
        let ds = DataSupport::from_rows(&[vec![0.0]]).unwrap();
        let edm = sched(Preset::Edm);
        let t = 0.3;
        let sigma = edm.at(t).b;
        let ll = log_likelihood(&ds, &edm, array![0.0].view(), t).unwrap();
        assert!((ll + 0.5 * (TAU * sigma * sigma).ln()).abs() < 1e-14);
    }

    #[test]
    fn symmetric_two_point_value() {
        let ll = log_likelihood(&two_point(), &sched(Preset::Fm), array![0.0].view(), 0.5).unwrap();
        let expected = -0.5 * (TAU * 0.25).ln() - 0.25 / 0.5;
        assert!((ll - expected).abs() < 1e-14);
        assert!((ll + 0.7258).abs() < 1e-4);
    }

    #[test]
    fn far_observation_stays_finite() {
        let ds = DataSupport::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let edm = sched(Preset::Edm); // b = 2t, so t = 0.05 gives b = 0.1
        let ll = log_likelihood(&ds, &edm, array![100.0, 0.0].view(), 0.05).unwrap();
        assert!(ll.is_finite() && ll < -1e5);
    }

    #[test]
    fn single_point_at_mode_piles_at_t_min() {
        let ds = DataSupport::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let grid = TimeGrid::new(1e-4, 512, 512).unwrap();
        let p = posterior_profile(&ds, &sched(Preset::Edm), array![0.0, 0.0, 0.0].view(), &grid).unwrap();
        assert!(p.mean_t < 1e-3, "{}", p.mean_t);
        let peak = p
            .log_joint
            .iter()
            .cloned()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 0);
    }

    #[test]
    fn near_data_concentrates_at_small_t() {
        let grid = TimeGrid::new(1e-4, 1024, 1024).unwrap();
        let p = posterior_profile(&two_point_3d(), &sched(Preset::Fm), array![0.999, 0.0, 0.0].view(), &grid)
            .unwrap();
        assert!(p.mean_t < 0.05, "{}", p.mean_t);
        assert!(p.var_t < 0.01, "{}", p.var_t);
    }

    #[test]
    fn normalization_across_presets() {
        let grid = TimeGrid::new(1e-4, 128, 128).unwrap();
        let ds = two_point();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for preset in Preset::ALL {
            let s = sched(preset);
            for _ in 0..250 {
                let u = array![rng.gen_range(-3.0..3.0)];
                let p = posterior_profile(&ds, &s, u.view(), &grid).unwrap();
                let total: f64 = p.probs.iter().sum();
                assert!((total - 1.0).abs() < 1e-8);
                assert!(p.probs.iter().all(|&q| q >= 0.0));
            }
        }
    }

    #[test]
    fn evidence_converges_under_refinement() {
        // Trapezoid error is second order; at the data points of a 1D
        // support the log block carries ~5e-6 of it at 1024 + 1024 nodes.
        let ds = two_point();
        let coarse = TimeGrid::new(1e-4, 512, 512).unwrap();
        let grid = TimeGrid::new(1e-4, 1024, 1024).unwrap();
        let fine = TimeGrid::new(1e-4, 2048, 2048).unwrap();
        for preset in Preset::ALL {
            let s = sched(preset);
            for u in [-3.0, -2.6, -1.3, -1.0, -0.5, 0.0, 0.2, 0.8, 1.0, 1.5, 2.9] {
                let u = array![u];
                let ev = |g: &TimeGrid| posterior_profile(&ds, &s, u.view(), g).unwrap().log_evidence;
                let (a, b, c) = (ev(&coarse), ev(&grid), ev(&fine));
                assert!((b - c).abs() <= 5e-6, "{preset} u={u}: {b} vs {c}");
                if (b - c).abs() > 1e-9 {
                    let order = (a - b).abs() / (b - c).abs();
                    assert!(order > 3.5, "{preset} u={u}: ratio {order}");
                }
            }
        }
    }

    #[test]
    fn proximity_shrinks_the_variance() {
        let ds = two_point_3d();
        let s = sched(Preset::Fm);
        let grid = TimeGrid::new(1e-4, 1024, 1024).unwrap();
        let vars: Vec<f64> = [0.3, 0.1, 0.03, 0.01]
            .iter()
            .map(|&eps| {
                let u = array![1.0, 0.0, eps];
                posterior_profile(&ds, &s, u.view(), &grid).unwrap().var_t
            })
            .collect();
        assert!(vars.windows(2).all(|w| w[1] < w[0]), "{vars:?}");
    }

    #[test]
    fn single_node_grid_flags_a_point_mass() {
        let ds = two_point();
        let grid = TimeGrid::point(0.4).unwrap();
        let p = posterior_profile(&ds, &sched(Preset::Fm), array![0.1].view(), &grid).unwrap();
        assert_eq!(p.probs, vec![1.0]);
        assert_eq!(p.var_t, 0.0);
        assert!(!p.single_node_warning);

        let grid = TimeGrid::new(1e-4, 32, 32).unwrap();
        let ds = DataSupport::from_rows(&[vec![0.0; 64]]).unwrap();
        let u = Array1::zeros(64);
        let p = posterior_profile(&ds, &sched(Preset::Fm), u.view(), &grid).unwrap();
        assert!(p.single_node_warning);
    }

    #[test]
    fn sigma_hat_examples() {
        assert!((sigma_hat(10.0, 101, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(sigma_hat(1.0, 3, 3), Err(Error::NoCodimension)));
        let ds = DataSupport::make_circles(16, &[1.0], 6, 2).unwrap();
        assert_eq!(sigma_mle(&ds, ds.point(3), None).unwrap().abs() < 1e-12, true);
    }

    #[test]
    fn sigma_hat_is_unbiased_in_high_dimension() {
        let ds = DataSupport::make_circles(64, &[0.5, 1.0], 128, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma0: f64 = 0.3;
        let draws: Vec<f64> = (0..1000)
            .map(|i| {
                let x = ds.point(i % ds.len());
                let eps: Array1<f64> = Array1::from_shape_fn(128, |_| rng.sample(StandardNormal));
                let u = &x + &(sigma0 * &eps);
                sigma_mle(&ds, u.view(), Some(2)).unwrap().powi(2)
            })
            .collect();
        let m = crate::stats::mean(&draws);
        let var = crate::stats::sample_variance(&draws);
        let predicted = 2.0 * sigma0.powi(4) / 126.0;
        assert!((m - 0.09).abs() <= 3.0 * (var / 1000.0).sqrt());
        assert!(var / predicted < 2.0 && predicted / var < 2.0);
    }

    #[test]
    fn inverse_gamma_needs_codimension() {
        let ds = two_point_3d();
        let grid = TimeGrid::new(1e-4, 64, 64).unwrap();
        let p = posterior_profile(&ds, &sched(Preset::Fm), array![1.0, 0.0, 0.01].view(), &grid).unwrap();
        assert_eq!(
            inverse_gamma_fit(&p, 2, 0.01).unwrap(),
            InverseGammaFit::NotApplicable { codim: 2 }
        );
    }

    #[test]
    fn inverse_gamma_density_matches_statrs() {
        use statrs::distribution::{Continuous, InverseGamma};
        let ig = InverseGamma::new(3.5, 2.0).unwrap();
        for v in [0.05, 0.3, 1.0, 4.0, 30.0] {
            assert!((inverse_gamma_ln_pdf(v, 3.5, 2.0) - ig.ln_pdf(v)).abs() < 1e-12);
        }
        // statrs loses this one entirely
        assert!(inverse_gamma_ln_pdf(1e-8, 62.0, 5e-7).is_finite());
    }

    #[test]
    fn batch_matches_single() {
        let ds = two_point_3d();
        let s = sched(Preset::Ddpm);
        let grid = TimeGrid::new(1e-4, 64, 64).unwrap();
        let us = array![[0.3, 0.1, -0.2], [1.1, 0.0, 0.05], [-2.0, 1.0, 0.0]];
        let batch = posterior_profiles(&ds, &s, &us, &grid).unwrap();
        for (row, p) in us.rows().into_iter().zip(&batch) {
            let single = posterior_profile(&ds, &s, row, &grid).unwrap();
            assert_eq!(single.probs, p.probs);
        }
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in `EXPECTED_FAILURES`,
//! or when a listed one starts passing.
//!
//! Run alone with `cargo test -p blindfield-core --test acceptance`. Extra
//! arguments select groups by substring, e.g. `-- stability circles`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use blindfield::experiments::circles::{run_circles, CirclesMetric, CirclesParams};
use blindfield::experiments::concentration::{
    dimension_sweep, inverse_gamma_report, proximity_sweep, DimensionParams, InverseGammaParams, ProximityParams,
};
use blindfield::experiments::logspace;
use blindfield::experiments::stability::{stability_sweep, verdict_table, StabilityParams};
use blindfield::fields::conditional_energy_gradient;
use blindfield::posterior::log_likelihood;
use blindfield::sampler::{integrate, sampler_velocity, Integrator, Mode, SamplerConfig};
use blindfield::stats::loglog_slope;
use blindfield::{DataSupport, FieldModel, Preset, Schedule, ScheduleParams, TimeGrid};
use ndarray::{array, Array1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Criteria whose bound is known not to hold for this implementation. They
/// still run and still print FAIL.
const EXPECTED_FAILURES: &[&str] = &["circles-high-dim-blind-vs-oracle", "heun-order-fm"];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Report {
    outcomes: Vec<Outcome>,
}

impl Report {
    fn check(&mut self, name: &'static str, pass: bool, detail: String) {
        let tag = match (pass, EXPECTED_FAILURES.contains(&name)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        println!("{tag:<16} {name:<36} {detail}");
        self.outcomes.push(Outcome { name, pass, detail });
    }

    fn info(&self, name: &str, detail: String) {
        println!("{:<16} {name:<36} {detail}", "INFO");
    }

    fn timed<T>(&mut self, name: &'static str, limit: Duration, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        let took = start.elapsed();
        self.check(name, took <= limit, format!("{:.1} s (limit {} s)", took.as_secs_f64(), limit.as_secs()));
        out
    }
}

fn sched(p: Preset) -> Schedule {
    Schedule::preset(p, &ScheduleParams::default()).unwrap()
}

fn two_point(dim: usize) -> DataSupport {
    let mut a = vec![0.0; dim];
    let mut b = vec![0.0; dim];
    a[0] = -1.0;
    b[0] = 1.0;
    DataSupport::from_rows(&[a, b]).unwrap()
}

fn gaussian(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn decomposition_identity(r: &mut Report) {
    let grid = TimeGrid::new(1e-4, 512, 512).unwrap();
    let supports = [
        ("two-point", two_point(2)),
        ("circles D=8", DataSupport::make_circles(64, &[0.5, 1.0], 8, 7).unwrap()),
    ];
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (_, ds) in &supports {
        for p in Preset::ALL {
            let s = sched(p);
            let model = FieldModel::new(ds, &s, &grid);
            for _ in 0..256 {
                let u = gaussian(ds.ambient_dim(), 1.5, &mut rng);
                worst = worst.max(model.decompose(u.view()).unwrap().identity_residual());
            }
        }
    }
    r.check("decomposition-identity", worst <= 1e-8, format!("max relative residual {worst:.2e} <= 1e-8"));
}

fn gradient_consistency(r: &mut Report) {
    let ds = two_point(2);
    let grid = TimeGrid::new(1e-4, 512, 512).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut marg, mut cond) = (0.0f64, 0.0f64);
    for p in Preset::ALL {
        let s = sched(p);
        let model = FieldModel::new(&ds, &s, &grid);
        for _ in 0..64 {
            let u = gaussian(2, 1.0, &mut rng);
            let g = model.marginal_energy_gradient(u.view()).unwrap();
            let h = 1e-5;
            let fd = Array1::from_shape_fn(2, |j| {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                (model.marginal_energy(up.view()).unwrap() - model.marginal_energy(dn.view()).unwrap()) / (2.0 * h)
            });
            marg = marg.max(norm(&(&g - &fd)) / norm(&g).max(1e-3));

            let t = rng.gen_range(0.05..0.95);
            let g = conditional_energy_gradient(&ds, &s, u.view(), t).unwrap();
            let fd = Array1::from_shape_fn(2, |j| {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[j] += h;
                dn[j] -= h;
                -(log_likelihood(&ds, &s, up.view(), t).unwrap() - log_likelihood(&ds, &s, dn.view(), t).unwrap())
                    / (2.0 * h)
            });
            cond = cond.max(norm(&(&g - &fd)) / norm(&g).max(1e-3));
        }
    }
    r.check("marginal-gradient-fd", marg <= 1e-4, format!("max relative error {marg:.2e} <= 1e-4"));
    r.check("conditional-gradient-fd", cond <= 1e-5, format!("max relative error {cond:.2e} <= 1e-5"));
}

fn gain_asymptotics(r: &mut Report) {
    let (fm, eqm) = (sched(Preset::Fm), sched(Preset::Eqm));
    let ts = logspace(1e-4, 1e-2, 64);
    let range = |f: &dyn Fn(f64) -> f64| {
        ts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(f(t)), hi.max(f(t))))
    };
    let (lo, hi) = range(&|t| fm.gains().lambda(t) / t);
    r.check(
        "gain-asymptotics-fm",
        lo >= 0.99 && hi <= 1.02,
        format!("lambda/t in [{lo:.5}, {hi:.5}] within [0.99, 1.02]"),
    );
    let (lo, hi) = range(&|t| eqm.gains().lambda(t) / (t * t));
    r.check(
        "gain-asymptotics-eqm",
        lo >= 0.99 && hi <= 1.02,
        format!("lambda/t^2 in [{lo:.5}, {hi:.5}] within [0.99, 1.02]"),
    );
}

fn singularity(r: &mut Report) {
    let ds = DataSupport::from_rows(&[vec![0.3, -0.2, 0.5]]).unwrap();
    let s = sched(Preset::Fm);
    let grid = TimeGrid::new(1e-4, 1024, 1024).unwrap();
    let model = FieldModel::new(&ds, &s, &grid);
    let dir = array![1.0, 2.0, -2.0] / 3.0;
    let eps = [1e-1, 1e-2, 1e-3];
    let (mut grad, mut pre) = (Vec::new(), Vec::new());
    for &e in &eps {
        let u = &ds.point(0) + &(e * &dir);
        let d = model.decompose(u.view()).unwrap();
        grad.push(norm(&d.energy_gradient));
        pre.push(norm(&d.natural_gradient));
    }
    let slope = loglog_slope(&eps, &grad);
    r.check("energy-gradient-singular", slope <= -0.8, format!("log-log slope {slope:.3} <= -0.8"));
    let ratio = pre.iter().cloned().fold(0.0, f64::max) / pre[0];
    r.check(
        "preconditioned-gradient-bounded",
        ratio <= 10.0,
        format!("max / value at 1e-1 = {ratio:.3} <= 10"),
    );
}

fn stability(r: &mut Report) {
    let ds = two_point(3);
    let grid = TimeGrid::new(1e-4, 512, 512).unwrap();
    let sweeps = r.timed("stability-runtime", Duration::from_secs(120), |_| {
        stability_sweep(&ds, &ScheduleParams::default(), &grid, &Preset::ALL, &StabilityParams::default()).unwrap()
    });
    let v = verdict_table(&sweeps);
    let ddpm = &v["ddpm"];
    r.check(
        "stability-ddpm-unbounded",
        ddpm.slope <= -0.8,
        format!("slope {:.3} <= -0.8 ({:?} probe)", ddpm.slope, ddpm.probe),
    );
    let fm = &v["fm"];
    r.check(
        "stability-fm-bounded",
        (-0.2..=0.2).contains(&fm.slope),
        format!("slope {:.3} in [-0.2, 0.2] ({:?} probe)", fm.slope, fm.probe),
    );
    let edm = &v["edm"];
    r.check(
        "stability-edm-monotone",
        edm.monotone_toward_t_min,
        format!("delta_v non-increasing toward t_min: {} (slope {:.3})", edm.monotone_toward_t_min, edm.slope),
    );
}

fn jensen_and_concentration(r: &mut Report) {
    let s = sched(Preset::Fm);
    let circles = DataSupport::make_circles(64, &[0.5, 1.0], 8, 7).unwrap();
    let point = TimeGrid::point(0.5).unwrap();
    let u = gaussian(8, 0.7, &mut ChaCha8Rng::seed_from_u64(3));
    let gap0 = FieldModel::new(&circles, &s, &point).jensen_gap(u.view(), 0.5).unwrap();
    r.check("jensen-gap-point-mass", gap0.abs() <= 1e-15, format!("|gap| = {:.1e} at a single node", gap0.abs()));

    let grid = TimeGrid::new(1e-4, 512, 512).unwrap();
    let ds = two_point(3);
    let model = FieldModel::new(&ds, &s, &grid);
    let u = array![0.9, 0.3, -0.4];
    let p = model.profile(u.view()).unwrap();
    let gap = model.jensen_gap(u.view(), 0.5).unwrap();
    r.check(
        "jensen-gap-spread-posterior",
        p.var_t > 1e-4 && gap.abs() > 0.0,
        format!("var_t {:.2e} > 1e-4, |gap| = {:.3e} > 0", p.var_t, gap.abs()),
    );

    let rows = r.timed("concentration-runtime", Duration::from_secs(120), |r| {
        let prox = proximity_sweep(&model, &ProximityParams::default()).unwrap();
        let var: Vec<f64> = prox.iter().map(|row| row.var_t).collect();
        r.check(
            "concentration-proximity",
            var.windows(2).all(|w| w[1] < w[0]),
            format!("var_t over eps 0.3..0.01: {}", fmt_list(&var)),
        );
        let params = DimensionParams::default();
        let rows = dimension_sweep(&s, &grid, &params, 11).unwrap();
        let var: Vec<f64> = rows.iter().map(|row| row.mean_var_t).collect();
        r.check(
            "concentration-dimension",
            var.windows(2).all(|w| w[1] < w[0]),
            format!("mean var_t over D 2..128: {}", fmt_list(&var)),
        );
        let hi = rows.last().unwrap();
        let z = (hi.sigma2_mean - hi.sigma0_sq).abs() / hi.sigma2_std_err;
        r.check(
            "sigma-estimator-unbiased",
            z <= 3.0,
            format!("D=128 mean {:.5} vs {:.5}, {z:.2} std errs <= 3", hi.sigma2_mean, hi.sigma0_sq),
        );
        let ratio = hi.sigma2_var / hi.sigma2_var_predicted;
        r.check(
            "sigma-estimator-variance",
            (0.5..=2.0).contains(&ratio),
            format!("D=128 Var ratio {ratio:.3} within 2x"),
        );
        rows
    });
    let gaps: Vec<f64> = rows.iter().filter(|row| row.dim >= 8).map(|row| row.mean_abs_jensen_gap).collect();
    r.check(
        "jensen-gap-dimension",
        gaps.windows(2).all(|w| w[1] < w[0]),
        format!("mean |gap| over D 8, 32, 128: {}", fmt_list(&gaps)),
    );

    let fit = inverse_gamma_report(&s, &InverseGammaParams::default(), 5).unwrap();
    let tv = fit.tv_distance().unwrap_or(f64::NAN);
    r.check("inverse-gamma-shape", tv <= 0.1, format!("TV {tv:.4} <= 0.1 at codim 126, eps 1e-3"));
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn circles(r: &mut Report) {
    let params = CirclesParams {
        n_per_ring: 64,
        dims: vec![2, 8, 128],
        presets: vec![Preset::Fm, Preset::Ddpm],
        modes: vec![Mode::Autonomous, Mode::Oracle],
        n_samples: 1000,
        ..Default::default()
    };
    let grid = TimeGrid::new(1e-4, 128, 128).unwrap();
    let sampler = SamplerConfig {
        n_steps: 200,
        integrator: Integrator::Heun,
        ..Default::default()
    };
    let runs = r.timed("circles-runtime", Duration::from_secs(600), |_| {
        run_circles(&params, &ScheduleParams::default(), &grid, sampler, 0).unwrap()
    });
    let m: Vec<&CirclesMetric> = runs.iter().map(|run| &run.metric).collect();
    let err = |dim, preset, mode| {
        m.iter()
            .find(|x| x.dim == dim && x.preset == preset && x.mode == mode)
            .map(|x| x.ring_error)
            .unwrap()
    };
    for x in &m {
        r.info(
            "circles",
            format!(
                "D={:<3} {:<4} {:<10} ring error {:.4e}, diverged {}",
                x.dim, x.preset, x.mode, x.ring_error, x.n_diverged
            ),
        );
    }
    let (fa, fo) = (err(128, Preset::Fm, Mode::Autonomous), err(128, Preset::Fm, Mode::Oracle));
    let (da, dor) = (err(128, Preset::Ddpm, Mode::Autonomous), err(128, Preset::Ddpm, Mode::Oracle));
    r.check(
        "circles-high-dim-blind-vs-oracle",
        fa <= 2.0 * fo && da <= 2.0 * dor,
        format!("D=128 fm {:.2}x, ddpm {:.2}x of oracle (<= 2x)", fa / fo, da / dor),
    );
    let (f8, d8) = (err(8, Preset::Fm, Mode::Autonomous), err(8, Preset::Ddpm, Mode::Autonomous));
    r.check("circles-mid-dim-fm-vs-ddpm", f8 < d8, format!("D=8 fm {f8:.4e} < ddpm {d8:.4e}"));
    let (f2, o2) = (err(2, Preset::Fm, Mode::Autonomous), err(2, Preset::Fm, Mode::Oracle));
    r.check(
        "circles-low-dim-ambiguity",
        f2 >= 1.5 * o2,
        format!("D=2 fm blind / oracle = {:.2} >= 1.5", f2 / o2),
    );
}

/// Self-convergence ratio `|u_n - u_2n| / |u_2n - u_4n|` of oracle Heun.
fn heun_ratio(ds: &DataSupport, s: &Schedule, grid: &TimeGrid, n: usize) -> f64 {
    let u0 = array![0.8, -0.6, 0.3];
    let run = |k| {
        integrate(ds, s, Some(u0.clone()), k, Mode::Oracle, Integrator::Heun, grid, 0)
            .unwrap()
            .final_state()
            .clone()
    };
    let (a, b, c) = (run(n), run(2 * n), run(4 * n));
    norm(&(&a - &b)) / norm(&(&b - &c))
}

fn sampler_correctness(r: &mut Report) {
    let ds = DataSupport::from_rows(&[vec![0.2, 0.1, -0.3]]).unwrap();
    let grid = TimeGrid::new(1e-4, 64, 64).unwrap();
    let ratios: Vec<f64> = [25, 50].iter().map(|&n| heun_ratio(&ds, &sched(Preset::Fm), &grid, n)).collect();
    r.check(
        "heun-order-fm",
        ratios.iter().all(|x| (3.3..=4.7).contains(x)),
        format!("ratios {} in [3.3, 4.7]", fmt_list(&ratios)),
    );
    let ddpm: Vec<f64> = [25, 50].iter().map(|&n| heun_ratio(&ds, &sched(Preset::Ddpm), &grid, n)).collect();
    r.info("heun-order-ddpm", format!("ratios {}", fmt_list(&ddpm)));

    let (fm, eqm) = (sched(Preset::Fm), sched(Preset::Eqm));
    let circles = DataSupport::make_circles(16, &[0.5, 1.0], 4, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..256 {
        let u = gaussian(4, 1.0, &mut rng);
        let t = rng.gen_range(0.01..0.99);
        let a = sampler_velocity(&circles, &fm, u.view(), t, Mode::Oracle, &grid).unwrap();
        let b = sampler_velocity(&circles, &eqm, u.view(), t, Mode::Oracle, &grid).unwrap();
        worst = worst.max((&a - &b).iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    r.check("eqm-fm-velocity-agreement", worst <= 1e-10, format!("max |difference| {worst:.2e} <= 1e-10"));
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let groups: [(&str, fn(&mut Report)); 8] = [
        ("decomposition", |r| r.timed("decomposition-runtime", Duration::from_secs(30), decomposition_identity)),
        ("gradient", |r| r.timed("gradient-runtime", Duration::from_secs(60), gradient_consistency)),
        ("gains", gain_asymptotics),
        ("singularity", singularity),
        ("stability", stability),
        ("concentration", jensen_and_concentration),
        ("circles", circles),
        ("sampler", sampler_correctness),
    ];
    let mut r = Report { outcomes: Vec::new() };
    for (name, run) in groups {
        if filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str())) {
            run(&mut r);
        }
    }

    let failed: Vec<&Outcome> = r.outcomes.iter().filter(|o| !o.pass).collect();
    let unexpected: Vec<&str> = failed
        .iter()
        .map(|o| o.name)
        .filter(|n| !EXPECTED_FAILURES.contains(n))
        .collect();
    let fixed: Vec<&str> = EXPECTED_FAILURES
        .iter()
        .copied()
        .filter(|n| r.outcomes.iter().any(|o| o.name == *n && o.pass))
        .collect();
    println!(
        "\n{} criteria: {} passed, {} failed ({} expected)",
        r.outcomes.len(),
        r.outcomes.len() - failed.len(),
        failed.len(),
        failed.len() - unexpected.len()
    );
    for o in &failed {
        if !EXPECTED_FAILURES.contains(&o.name) {
            println!("unexpected failure: {} ({})", o.name, o.detail);
        }
    }
    for n in &fixed {
        println!("expected failure now passes, update EXPECTED_FAILURES: {n}");
    }
    if unexpected.is_empty() && fixed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

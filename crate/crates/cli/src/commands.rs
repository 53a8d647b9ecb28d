//! One function per subcommand. Each validates everything it needs before
//! computing, then writes CSV tables plus a `config.json` of the resolved
//! configuration into the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use blindfield::experiments::circles::{run_circles, CirclesMetric, CirclesParams};
use blindfield::experiments::concentration::{dimension_sweep, inverse_gamma_report, proximity_sweep};
use blindfield::experiments::decompose::decompose_ray;
use blindfield::experiments::energy_map::{energy_map, lift, plane_coordinates};
use blindfield::experiments::stability::{stability_sweep, verdict_table};
use blindfield::sampler::DriftErrorRecord;
use blindfield::{DataSupport, FieldModel};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Validate};

/// Supports are expected to sit in a ball of radius about one; larger ones
/// leave the preset schedules under-dispersed at `t = 1`.
const MAX_NORM_WARNING: f64 = 3.0;

pub struct Context {
    pub config: ExperimentConfig,
    pub allow_divergence: bool,
}

impl Context {
    fn out_dir(&self) -> &Path {
        &self.config.output.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(self.out_dir())
            .map_err(|e| CliError::Output(format!("{}: {e}", self.out_dir().display())))?;
        self.write_json("config.json", &self.config)
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| output_error(&path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| output_error(&path, e))
    }

    fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| output_error(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| output_error(&path, e))?;
        }
        w.flush().map_err(|e| output_error(&path, e))
    }

    fn support(&self) -> Result<DataSupport, CliError> {
        let ds = self.config.support.build().invalid()?;
        let max = ds.max_norm();
        if max > MAX_NORM_WARNING {
            eprintln!("warning: support reaches norm {max:.3}; rescale the data to about unit norm");
        }
        Ok(ds)
    }
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct PlanePoint {
    u1: f64,
    u2: f64,
}

pub fn energy_map_cmd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let ds = ctx.support()?;
    let s = c.schedule().invalid()?;
    let grid = c.grid().invalid()?;
    c.energy_map.validate().invalid()?;
    lift(&ds, c.energy_map.center).invalid()?;
    let points = plane_coordinates(&ds).invalid()?;

    let rows = energy_map(&FieldModel::new(&ds, &s, &grid), &c.energy_map).compute()?;
    ctx.prepare()?;
    ctx.write_csv("energy_map.csv", &rows)?;
    let points: Vec<PlanePoint> = points.rows().into_iter().map(|r| PlanePoint { u1: r[0], u2: r[1] }).collect();
    ctx.write_csv("data_points.csv", &points)
}

#[derive(Serialize)]
struct ProbeRecord {
    probe: &'static str,
    t: f64,
    nu_abs: f64,
    est_err: f64,
    delta_v: f64,
}

impl ProbeRecord {
    fn new(probe: &'static str, r: &DriftErrorRecord) -> Self {
        Self {
            probe,
            t: r.t,
            nu_abs: r.nu_abs,
            est_err: r.est_err,
            delta_v: r.delta_v,
        }
    }
}

/// Argument and shape errors raised by a driver's own checks count as
/// validation failures; anything else happened mid-computation.
fn classify(e: blindfield::Error) -> CliError {
    match e {
        blindfield::Error::InvalidArgument(_)
        | blindfield::Error::DimensionMismatch { .. }
        | blindfield::Error::NoCodimension => CliError::Validation(e),
        e => CliError::Compute(e),
    }
}

pub fn stability_cmd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let ds = ctx.support()?;
    let grid = c.grid().invalid()?;
    for &p in &c.stability.presets {
        blindfield::Schedule::preset(p, &c.schedule.params()).invalid()?;
    }

    let sweeps = stability_sweep(&ds, &c.schedule.params(), &grid, &c.stability.presets, &c.stability.probe)
        .map_err(classify)?;
    ctx.prepare()?;
    for sweep in &sweeps {
        let rows: Vec<ProbeRecord> = sweep
            .forward
            .iter()
            .map(|r| ProbeRecord::new("forward", r))
            .chain(sweep.fixed.iter().map(|r| ProbeRecord::new("fixed", r)))
            .collect();
        ctx.write_csv(&format!("stability_{}.csv", sweep.preset), &rows)?;
    }
    ctx.write_json("verdict.json", &verdict_table(&sweeps))
}

#[derive(Serialize)]
struct ProjectedSample {
    p1: f64,
    p2: f64,
}

pub fn circles_cmd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let grid = c.grid().invalid()?;
    let params = CirclesParams {
        n_samples: c.sampler.n_samples,
        ..c.circles.clone()
    };
    params.validate().invalid()?;
    let sampler = c.sampler.config();
    sampler.validate().invalid()?;
    for &p in &params.presets {
        blindfield::Schedule::preset(p, &c.schedule.params()).invalid()?;
    }
    ctx.prepare()?;

    let runs = run_circles(&params, &c.schedule.params(), &grid, sampler, c.sampler.seed).compute()?;
    for run in &runs {
        let m = &run.metric;
        let rows: Vec<ProjectedSample> = run
            .projected
            .rows()
            .into_iter()
            .map(|r| ProjectedSample { p1: r[0], p2: r[1] })
            .collect();
        ctx.write_csv(&format!("samples_D{}_{}_{}.csv", m.dim, m.preset, m.mode), &rows)?;
    }
    let metrics: Vec<&CirclesMetric> = runs.iter().map(|r| &r.metric).collect();
    ctx.write_json("metrics.json", &metrics)?;
    let diverged: usize = metrics.iter().map(|m| m.n_diverged).sum();
    if diverged > 0 && !ctx.allow_divergence {
        let total = metrics.iter().map(|m| m.n_samples).sum();
        return Err(CliError::Diverged { n: diverged, total });
    }
    Ok(())
}

pub fn concentration_cmd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let ds = ctx.support()?;
    let s = c.schedule().invalid()?;
    let grid = c.grid().invalid()?;

    let model = FieldModel::new(&ds, &s, &grid);
    let proximity = proximity_sweep(&model, &c.concentration.proximity).map_err(classify)?;
    ctx.prepare()?;
    ctx.write_csv("proximity.csv", &proximity)?;
    let dimension = dimension_sweep(&s, &grid, &c.concentration.dimension, c.sampler.seed).map_err(classify)?;
    ctx.write_csv("dimension.csv", &dimension)?;
    let fit = inverse_gamma_report(&s, &c.concentration.inverse_gamma, c.sampler.seed).map_err(classify)?;
    ctx.write_json("inverse_gamma.json", &fit)
}

pub fn decompose_cmd(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let ds = ctx.support()?;
    let s = c.schedule().invalid()?;
    let grid = c.grid().invalid()?;

    let rows = decompose_ray(&FieldModel::new(&ds, &s, &grid), &c.decompose).map_err(classify)?;
    ctx.prepare()?;
    ctx.write_csv(&format!("decompose_{}.csv", s.name()), &rows)
}

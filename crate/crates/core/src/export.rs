//! CSV writers for profiles, trajectories and drift sweeps.

use std::io::Write;

use crate::error::Result;
use crate::posterior::PosteriorProfile;
use crate::sampler::{DriftErrorRecord, Trajectory};

/// Columns `t, log_joint, prob`.
pub fn write_profile<W: Write>(out: W, profile: &PosteriorProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "log_joint", "prob"])?;
    for ((t, lj), p) in profile.t.iter().zip(&profile.log_joint).zip(&profile.probs) {
        w.write_record([t.to_string(), lj.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `step, t, u0, ..., u{D-1}`.
pub fn write_trajectory<W: Write>(out: W, trajectory: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = trajectory.states.first().map_or(0, |(_, u)| u.len());
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((0..dim).map(|j| format!("u{j}")));
    w.write_record(&header)?;
    for (step, (t, u)) in trajectory.states.iter().enumerate() {
        let mut row = vec![step.to_string(), t.to_string()];
        row.extend(u.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, nu_abs, est_err, delta_v`.
pub fn write_drift_sweep<W: Write>(out: W, records: &[DriftErrorRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "nu_abs", "est_err", "delta_v"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.nu_abs.to_string(),
            r.est_err.to_string(),
            r.delta_v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

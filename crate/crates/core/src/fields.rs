//! Exact conditional and autonomous fields of a finite data support.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::mixture::{Anchor, Joint, NodeTable};
use crate::posterior::PosteriorProfile;
use crate::schedule::Schedule;
use crate::support::DataSupport;

/// Split of the autonomous field into a preconditioned gradient, a transport
/// correction and a linear drift.
#[derive(Clone, Debug, Serialize)]
pub struct FieldDecomposition {
    /// `lambda_bar * grad E_marg`.
    pub natural_gradient: Array1<f64>,
    /// `E[lambda grad E_t] - lambda_bar grad E_marg`.
    pub transport_correction: Array1<f64>,
    /// `c_scale_bar * u`.
    pub linear_drift: Array1<f64>,
    /// `f*(u)`, computed directly from the conditional targets.
    pub total: Array1<f64>,
    pub lambda_bar: f64,
    pub c_scale_bar: f64,
    /// `grad E_marg(u)`.
    pub energy_gradient: Array1<f64>,
}

impl FieldDecomposition {
    /// `||total - sum of parts|| / (1 + ||total||)`.
    pub fn identity_residual(&self) -> f64 {
        let parts = &self.natural_gradient + &self.transport_correction + &self.linear_drift;
        norm(&(&self.total - &parts).view()) / (1.0 + norm(&self.total.view()))
    }
}

pub(crate) fn norm(v: &ArrayView1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// A support, schedule and grid bound together, with the schedule
/// evaluated once at every node.
///
/// Field evaluations drop posterior terms more than 80 nats below the
/// leading one; [`FieldModel::profile`] keeps every node.
#[derive(Clone, Debug)]
pub struct FieldModel<'a> {
    ds: &'a DataSupport,
    schedule: &'a Schedule,
    grid: &'a TimeGrid,
    table: NodeTable,
}

impl<'a> FieldModel<'a> {
    pub fn new(ds: &'a DataSupport, schedule: &'a Schedule, grid: &'a TimeGrid) -> Self {
        Self {
            ds,
            schedule,
            grid,
            table: NodeTable::new(ds, schedule, grid),
        }
    }

    pub fn support(&self) -> &'a DataSupport {
        self.ds
    }

    pub fn schedule(&self) -> &'a Schedule {
        self.schedule
    }

    pub fn grid(&self) -> &'a TimeGrid {
        self.grid
    }

    fn joint<'u>(&self, u: ArrayView1<'u, f64>, full: bool) -> Result<(Anchor<'a>, Joint)> {
        self.ds.check_dim(u)?;
        let anchor = Anchor::new(self.ds, u);
        let joint = Joint::new(&self.table, &anchor, full);
        Ok((anchor, joint))
    }

    pub fn profile(&self, u: ArrayView1<f64>) -> Result<PosteriorProfile> {
        let (_, joint) = self.joint(u, true)?;
        Ok(PosteriorProfile::from_joint(self.grid, self.schedule, &joint))
    }

    /// `f*(u) = E_{t|u}[f_t(u)]`.
    pub fn autonomous_field(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (anchor, joint) = self.joint(u, false)?;
        Ok(joint.expect_vector(&self.table, &anchor, |n| n.d / n.b, |n| n.c))
    }

    /// `-ln p(u)`.
    pub fn marginal_energy(&self, u: ArrayView1<f64>) -> Result<f64> {
        let (_, joint) = self.joint(u, false)?;
        Ok(-joint.log_evidence)
    }

    /// `E_{t|u}[(u - a D*_t) / b^2]`.
    pub fn marginal_energy_gradient(&self, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (anchor, joint) = self.joint(u, false)?;
        Ok(joint.expect_vector(&self.table, &anchor, |n| 1.0 / (n.b * n.b), |_| 0.0))
    }

    pub fn decompose(&self, u: ArrayView1<f64>) -> Result<FieldDecomposition> {
        let (anchor, joint) = self.joint(u, false)?;
        let t = &self.table;
        let total = joint.expect_vector(t, &anchor, |n| n.d / n.b, |n| n.c);
        let energy_gradient = joint.expect_vector(t, &anchor, |n| 1.0 / (n.b * n.b), |_| 0.0);
        // lambda / b^2 = d/b - c/a stays bounded as b -> 0
        let weighted = joint.expect_vector(t, &anchor, |n| n.d / n.b - n.c_scale(), |_| 0.0);
        let lambda_bar = joint.expect_scalar(t, |n| n.lambda());
        let c_scale_bar = joint.expect_scalar(t, |n| n.c_scale());
        let natural_gradient = lambda_bar * &energy_gradient;
        let transport_correction = &weighted - &natural_gradient;
        let linear_drift = c_scale_bar * &u;
        Ok(FieldDecomposition {
            natural_gradient,
            transport_correction,
            linear_drift,
            total,
            lambda_bar,
            c_scale_bar,
            energy_gradient,
        })
    }

    /// `b(t_true) E_{tau|u}[1 / b(tau)] - 1`.
    pub fn jensen_gap(&self, u: ArrayView1<f64>, t_true: f64) -> Result<f64> {
        let (_, joint) = self.joint(u, false)?;
        let inv_b = joint.expect_scalar(&self.table, |n| 1.0 / n.b);
        Ok(self.schedule.at(t_true).b * inv_b - 1.0)
    }

    /// [`FieldModel::autonomous_field`] for every row, in parallel.
    pub fn autonomous_fields(&self, us: &Array2<f64>) -> Result<Array2<f64>> {
        self.map_rows(us, |u| self.autonomous_field(u))
    }

    pub(crate) fn map_rows(
        &self,
        us: &Array2<f64>,
        f: impl Fn(ArrayView1<f64>) -> Result<Array1<f64>> + Send + Sync,
    ) -> Result<Array2<f64>> {
        if us.ncols() != self.ds.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ds.ambient_dim(),
                found: us.ncols(),
            });
        }
        let rows: Vec<_> = us.rows().into_iter().collect();
        let out = rows.into_par_iter().map(f).collect::<Result<Vec<_>>>()?;
        let mut result = Array2::zeros(us.raw_dim());
        for (mut dst, src) in result.rows_mut().into_iter().zip(out) {
            dst.assign(&src);
        }
        Ok(result)
    }
}

/// Oracle quantities at a single noise level.
struct Conditional<'a> {
    table: NodeTable,
    anchor: Anchor<'a>,
    joint: Joint,
}

impl<'a> Conditional<'a> {
    fn new(ds: &'a DataSupport, s: &Schedule, u: ArrayView1<f64>, t: f64) -> Result<Self> {
        ds.check_dim(u)?;
        let grid = TimeGrid::point(s.clamp(t))?;
        let table = NodeTable::new(ds, s, &grid);
        let anchor = Anchor::new(ds, u);
        let joint = Joint::new(&table, &anchor, true);
        Ok(Self { table, anchor, joint })
    }

    fn vector(&self, alpha: impl Fn(&crate::mixture::Node) -> f64, beta: impl Fn(&crate::mixture::Node) -> f64) -> Array1<f64> {
        self.joint.expect_vector(&self.table, &self.anchor, alpha, beta)
    }
}

/// `D*_t(u)`: the softmax-weighted barycenter of the support.
pub fn conditional_denoiser(ds: &DataSupport, s: &Schedule, u: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
    Ok(Conditional::new(ds, s, u, t)?.vector(|_| 0.0, |_| 1.0))
}

/// `f_t(u) = (d/b) u + (c - d a / b) D*_t(u)`.
pub fn conditional_target(ds: &DataSupport, s: &Schedule, u: ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
    Ok(Conditional::new(ds, s, u, t)?.vector(|n| n.d / n.b, |n| n.c))
}

/// `grad E_t(u) = (u - a D*_t(u)) / b^2`.
pub fn conditional_energy_gradient(
    ds: &DataSupport,
    s: &Schedule,
    u: ArrayView1<f64>,
    t: f64,
) -> Result<Array1<f64>> {
    Ok(Conditional::new(ds, s, u, t)?.vector(|n| 1.0 / (n.b * n.b), |_| 0.0))
}

pub fn autonomous_field(ds: &DataSupport, s: &Schedule, u: ArrayView1<f64>, grid: &TimeGrid) -> Result<Array1<f64>> {
    FieldModel::new(ds, s, grid).autonomous_field(u)
}

pub fn marginal_energy(ds: &DataSupport, s: &Schedule, u: ArrayView1<f64>, grid: &TimeGrid) -> Result<f64> {
    FieldModel::new(ds, s, grid).marginal_energy(u)
}

pub fn marginal_energy_gradient(
    ds: &DataSupport,
    s: &Schedule,
    u: ArrayView1<f64>,
    grid: &TimeGrid,
) -> Result<Array1<f64>> {
    FieldModel::new(ds, s, grid).marginal_energy_gradient(u)
}

pub fn decompose_field(
    ds: &DataSupport,
    s: &Schedule,
    u: ArrayView1<f64>,
    grid: &TimeGrid,
) -> Result<FieldDecomposition> {
    FieldModel::new(ds, s, grid).decompose(u)
}

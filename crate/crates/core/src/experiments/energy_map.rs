//! Marginal energy and field diagnostics over a 2D window.

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::{norm, FieldModel};
use crate::support::DataSupport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyMapParams {
    pub center: [f64; 2],
    pub half_width: f64,
    /// Cells per axis.
    pub resolution: usize,
}

impl Default for EnergyMapParams {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            half_width: 2.0,
            resolution: 81,
        }
    }
}

impl EnergyMapParams {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(invalid("energy map resolution must be >= 2"));
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("energy map half_width must be positive"));
        }
        Ok(())
    }

    pub fn axis(&self, j: usize) -> Vec<f64> {
        let n = self.resolution;
        (0..n)
            .map(|i| self.center[j] + self.half_width * (2.0 * i as f64 - (n - 1) as f64) / (n - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyMapRow {
    pub u1: f64,
    pub u2: f64,
    pub energy: f64,
    pub grad_norm: f64,
    pub lambda_bar: f64,
    pub correction_norm: f64,
}

/// Maps plane coordinates into `R^D`: the identity for 2D supports, `P c`
/// for embedded ones.
pub fn lift(ds: &DataSupport, coords: [f64; 2]) -> Result<Array1<f64>> {
    if ds.ambient_dim() == 2 {
        return Ok(Array1::from(coords.to_vec()));
    }
    match ds.embedding() {
        Some(emb) => Ok(emb.projection.dot(&Array1::from(coords.to_vec()))),
        None => Err(invalid(format!(
            "support in R^{} has no 2D slice (needs D = 2 or an embedding)",
            ds.ambient_dim()
        ))),
    }
}

/// Plane coordinates of the data points.
pub fn plane_coordinates(ds: &DataSupport) -> Result<Array2<f64>> {
    if ds.ambient_dim() == 2 {
        return Ok(ds.points().clone());
    }
    match ds.embedding() {
        Some(emb) => Ok(emb.source.clone()),
        None => Err(invalid("support has no 2D slice")),
    }
}

/// Row-major over `u2` then `u1`: the row for cell `(i, j)` sits at
/// `j * resolution + i`.
pub fn energy_map(model: &FieldModel<'_>, params: &EnergyMapParams) -> Result<Vec<EnergyMapRow>> {
    params.validate()?;
    let ds = model.support();
    lift(ds, params.center)?;
    let (xs, ys) = (params.axis(0), params.axis(1));
    let cells: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    cells
        .into_par_iter()
        .map(|(u1, u2)| {
            let u = lift(ds, [u1, u2])?;
            let dec = model.decompose(u.view())?;
            Ok(EnergyMapRow {
                u1,
                u2,
                energy: model.marginal_energy(u.view())?,
                grad_norm: norm(&dec.energy_gradient.view()),
                lambda_bar: dec.lambda_bar,
                correction_norm: norm(&dec.transport_correction.view()),
            })
        })
        .collect()
}

//! Field decomposition along a ray running from the far field into a data
//! point.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::{norm, FieldModel};

use super::logspace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeParams {
    pub point_index: usize,
    /// Ray direction; defaults to the last coordinate axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    pub far: f64,
    pub near: f64,
    pub n_points: usize,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            point_index: 1,
            direction: None,
            far: 3.0,
            near: 1e-3,
            n_points: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecomposeRow {
    /// Distance from the data point.
    pub distance: f64,
    pub natural_gradient: f64,
    pub transport_correction: f64,
    pub linear_drift: f64,
    pub total: f64,
    pub identity_residual: f64,
    /// `||correction|| / ||total||`.
    pub correction_ratio: f64,
}

/// Rows ordered from the far end to the near end.
pub fn decompose_ray(model: &FieldModel<'_>, params: &DecomposeParams) -> Result<Vec<DecomposeRow>> {
    let ds = model.support();
    if params.point_index >= ds.len() {
        return Err(invalid(format!("point_index {} is out of range", params.point_index)));
    }
    if !(params.near > 0.0 && params.near < params.far) || params.n_points < 2 {
        return Err(invalid("decompose ray needs 0 < near < far and n_points >= 2"));
    }
    let dim = ds.ambient_dim();
    let mut dir = match &params.direction {
        Some(d) if d.len() != dim => {
            return Err(crate::Error::DimensionMismatch {
                expected: dim,
                found: d.len(),
            })
        }
        Some(d) => ndarray::Array1::from(d.clone()),
        None => {
            let mut d = ndarray::Array1::zeros(dim);
            d[dim - 1] = 1.0;
            d
        }
    };
    let n = norm(&dir.view());
    if !(n > 0.0) {
        return Err(invalid("direction must be nonzero"));
    }
    dir /= n;
    let x = ds.point(params.point_index);
    let mut distances = logspace(params.near, params.far, params.n_points);
    distances.reverse();
    distances
        .into_iter()
        .map(|r| {
            let u = &x + &(r * &dir);
            let dec = model.decompose(u.view())?;
            let total = norm(&dec.total.view());
            let correction = norm(&dec.transport_correction.view());
            Ok(DecomposeRow {
                distance: r,
                natural_gradient: norm(&dec.natural_gradient.view()),
                transport_correction: correction,
                linear_drift: norm(&dec.linear_drift.view()),
                total,
                identity_residual: dec.identity_residual(),
                correction_ratio: correction / total,
            })
        })
        .collect()
}

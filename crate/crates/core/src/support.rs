//! Finite data supports, including concentric circles embedded in `R^D`.

use std::f64::consts::TAU;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Isometric embedding of a 2D point set into `R^D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// `D x 2` matrix with orthonormal columns.
    pub projection: Array2<f64>,
    /// `N x 2` source points.
    pub source: Array2<f64>,
    pub radii: Vec<f64>,
}

impl Embedding {
    /// `P^T u`.
    pub fn project(&self, u: ArrayView1<f64>) -> Array1<f64> {
        self.projection.t().dot(&u)
    }

    /// Norm of the component of `u` orthogonal to the embedded plane.
    pub fn residual_norm(&self, u: ArrayView1<f64>) -> f64 {
        let back = self.projection.dot(&self.project(u));
        (&u - &back).mapv(|x| x * x).sum().sqrt()
    }

    /// Distance from the projected radius of `u` to the nearest ring.
    pub fn ring_distance(&self, u: ArrayView1<f64>) -> f64 {
        let r = self.project(u).mapv(|x| x * x).sum().sqrt();
        self.radii
            .iter()
            .map(|&rad| (r - rad).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// A finite set of clean points `x_k` in `R^D`, stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSupport {
    points: Array2<f64>,
    sq_norms: Vec<f64>,
    embedding: Option<Embedding>,
}

impl DataSupport {
    /// Wraps the given rows as a support. No normalization is applied.
    pub fn make_explicit(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::EmptySupport);
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(invalid("support points must be finite"));
        }
        Ok(Self {
            sq_norms: row_sq_norms(&points),
            points,
            embedding: None,
        })
    }

    /// Builds a support from a list of vectors, checking their dimensions.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptySupport)?;
        let dim = first.len();
        let mut points = Array2::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            points.row_mut(i).assign(&ArrayView1::from(row.as_slice()));
        }
        Self::make_explicit(points)
    }

    /// Rings of `n_per_ring` equally spaced points, one ring per radius,
    /// mapped into `R^ambient_dim` by a seeded random orthogonal `P`.
    ///
    /// `P` is the Gram-Schmidt orthonormalization of a standard Gaussian
    /// `D x 2` matrix. For `D = 2` the identity is used so the circles stay
    /// in their native coordinates.
    pub fn make_circles(
        n_per_ring: usize,
        radii: &[f64],
        ambient_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(invalid(format!(
                "circles need ambient_dim >= 2, got {ambient_dim}"
            )));
        }
        if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("radii must be a nonempty list of positive values"));
        }
        if n_per_ring < 4 {
            return Err(invalid(format!("n_per_ring must be >= 4, got {n_per_ring}")));
        }

        let n = n_per_ring * radii.len();
        let mut source = Array2::zeros((n, 2));
        for (ring, &r) in radii.iter().enumerate() {
            for j in 0..n_per_ring {
                let theta = TAU * j as f64 / n_per_ring as f64;
                let row = ring * n_per_ring + j;
                source[[row, 0]] = r * theta.cos();
                source[[row, 1]] = r * theta.sin();
            }
        }

        let projection = if ambient_dim == 2 {
            Array2::eye(2)
        } else {
            random_orthonormal_pair(ambient_dim, seed)
        };
        let points = source.dot(&projection.t());
        Ok(Self {
            sq_norms: row_sq_norms(&points),
            points,
            embedding: Some(Embedding {
                projection,
                source,
                radii: radii.to_vec(),
            }),
        })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, k: usize) -> ArrayView1<'_, f64> {
        self.points.row(k)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn embedding(&self) -> Option<&Embedding> {
        self.embedding.as_ref()
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }

    /// `||x_k||^2` for every point.
    pub(crate) fn sq_norms(&self) -> &[f64] {
        &self.sq_norms
    }

    pub(crate) fn check_dim(&self, u: ArrayView1<f64>) -> Result<()> {
        if u.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Index and distance of the closest support point; ties go to the
    /// lowest index.
    pub fn nearest_point(&self, u: ArrayView1<f64>) -> Result<(usize, f64)> {
        self.check_dim(u)?;
        let mut best = (0, f64::INFINITY);
        for (k, x) in self.points.rows().into_iter().enumerate() {
            let d2: f64 = x.iter().zip(u.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (k, d2);
            }
        }
        Ok((best.0, best.1.sqrt()))
    }

    /// Reads a support from CSV with one row per point and a header line.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| invalid(format!("bad support value `{field}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    /// Writes the points as CSV with header `d0,...,d{D-1}`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record((0..self.ambient_dim()).map(|j| format!("d{j}")))?;
        for row in self.points.rows() {
            writer.write_record(row.iter().map(|x| format!("{x:e}")))?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn row_sq_norms(points: &Array2<f64>) -> Vec<f64> {
    points.rows().into_iter().map(|r| r.dot(&r)).collect()
}

fn random_orthonormal_pair(dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g: Array2<f64> = Array2::from_shape_fn((dim, 2), |_| StandardNormal.sample(&mut rng));
    for j in 0..2 {
        for i in 0..j {
            let proj = g.column(i).dot(&g.column(j));
            let qi = g.column(i).to_owned();
            g.column_mut(j).scaled_add(-proj, &qi);
        }
        let norm = g.column(j).dot(&g.column(j)).sqrt();
        g.column_mut(j).mapv_inplace(|x| x / norm);
    }
    // A second pass removes the residual overlap left by a single sweep.
    let overlap = g.column(0).dot(&g.column(1));
    let q0 = g.column(0).to_owned();
    g.column_mut(1).scaled_add(-overlap, &q0);
    let norm = g.column(1).dot(&g.column(1)).sqrt();
    g.column_mut(1).mapv_inplace(|x| x / norm);
    g
}

/// Unit vector orthogonal to the embedded plane, for building off-manifold
/// probes. Returns `None` when the support has no embedding or `D = 2`.
pub fn orthogonal_direction(support: &DataSupport, seed: u64) -> Option<Array1<f64>> {
    let emb = support.embedding()?;
    let dim = support.ambient_dim();
    if dim <= 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g: Array1<f64> = Array1::from_shape_fn(dim, |_| StandardNormal.sample(&mut rng));
        let coords = emb.projection.t().dot(&g);
        let mut e = g - emb.projection.dot(&coords);
        let norm = e.dot(&e).sqrt();
        if norm > 1e-6 {
            e /= norm;
            return Some(e);
        }
    }
}

/// Mean of the support points.
pub fn centroid(support: &DataSupport) -> Array1<f64> {
    support
        .points()
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(support.ambient_dim()))
}

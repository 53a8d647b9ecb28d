//! Quadrature grids over the noise level.

use crate::error::{invalid, Result};

/// Where the log-spaced block hands over to the uniform block.
const LOG_BLOCK_END: f64 = 0.1;

/// Quadrature nodes on `[t_min, 1]` with composite trapezoid weights.
///
/// The weights integrate against `dt`, so they sum to `1 - t_min`; the
/// uniform prior density `1 / (1 - t_min)` is applied by the posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    /// `m_log` log-spaced nodes on `[t_min, 0.1]` merged with `m_uniform`
    /// uniform nodes on `[0.1, 1]`. When `t_min >= 0.1` all nodes are
    /// uniform on `[t_min, 1]`.
    pub fn new(t_min: f64, m_uniform: usize, m_log: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_min < 1.0) {
            return Err(invalid(format!("t_min must lie in (0, 1), got {t_min}")));
        }
        if m_uniform + m_log < 64 {
            return Err(invalid(format!(
                "a time grid needs at least 64 nodes, got {}",
                m_uniform + m_log
            )));
        }
        let mut nodes = Vec::with_capacity(m_uniform + m_log + 2);
        if t_min >= LOG_BLOCK_END {
            nodes.extend(linspace(t_min, 1.0, m_uniform + m_log));
        } else {
            let (lo, hi) = (t_min.ln(), LOG_BLOCK_END.ln());
            nodes.extend(linspace(lo, hi, m_log.max(2)).map(f64::exp));
            nodes.extend(linspace(LOG_BLOCK_END, 1.0, m_uniform.max(2)));
            // exp(ln t_min) may not round-trip exactly
            nodes[0] = t_min;
        }
        Self::from_nodes(nodes)
    }

    /// Trapezoid weights for arbitrary nodes. Nodes are sorted and
    /// near-duplicates (closer than `1e-14` relative) are merged.
    pub fn from_nodes(mut nodes: Vec<f64>) -> Result<Self> {
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(invalid("grid nodes must be finite"));
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|b, a| (*b - *a).abs() <= 1e-14 * a.abs().max(1.0));
        if nodes.len() < 2 {
            return Err(invalid("a time grid needs at least two distinct nodes"));
        }
        let m = nodes.len();
        let mut weights = vec![0.0; m];
        for i in 0..m - 1 {
            let h = 0.5 * (nodes[i + 1] - nodes[i]);
            weights[i] += h;
            weights[i + 1] += h;
        }
        Ok(Self { nodes, weights })
    }

    /// A single node with unit weight. The posterior it induces is a point
    /// mass at `t`.
    pub fn point(t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(invalid(format!("grid point must lie in (0, 1], got {t}")));
        }
        Ok(Self {
            nodes: vec![t],
            weights: vec![1.0],
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn t_min(&self) -> f64 {
        self.nodes[0]
    }

    /// Length of the prior support, `sum(weights)`.
    pub fn span(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_i w_i f(t_i)`, the trapezoid approximation of `int f dt`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// Same grid with every interval bisected.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.len());
        for pair in self.nodes.windows(2) {
            nodes.push(pair[0]);
            nodes.push(0.5 * (pair[0] + pair[1]));
        }
        nodes.extend(self.nodes.last());
        Self::from_nodes(nodes).expect("refining a valid grid")
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

//! Gaussian-mixture posterior over `(t, k)` for one observation.
//!
//! Squared distances are anchored at the data points,
//! `||u - a x_k||^2 = ||u - x_k||^2 + 2(1-a)<u - x_k, x_k> + (1-a)^2 ||x_k||^2`,
//! and every vector expectation is accumulated as
//! `sum_k A_k (u - x_k) + B_k x_k`. Near the data `u - x_k` is small and
//! exact, so terms like `(u - a D*) / b^2` never subtract two large vectors.

use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1};

use crate::grid::TimeGrid;
use crate::schedule::Schedule;
use crate::stats::logsumexp;
use crate::support::DataSupport;

/// Log-terms this far below the running maximum are dropped. `e^-80` is
/// far below the rounding of a sum that contains the maximum itself.
const PRUNE_NATS: f64 = 80.0;

/// Schedule quantities at one quadrature node.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Node {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub one_minus_a: f64,
    pub ln_weight: f64,
    /// `-(D/2) ln(2 pi b^2) - ln N`.
    pub ln_norm: f64,
    pub inv_two_b2: f64,
}

impl Node {
    pub fn lambda(&self) -> f64 {
        self.b / self.a * (self.d * self.a - self.c * self.b)
    }

    pub fn c_scale(&self) -> f64 {
        self.c / self.a
    }
}

/// Node table for a (support, schedule, grid) triple.
#[derive(Clone, Debug)]
pub(crate) struct NodeTable {
    pub nodes: Vec<Node>,
    /// `-ln(span)`, the log density of the uniform prior.
    pub ln_prior: f64,
}

impl NodeTable {
    pub fn new(ds: &DataSupport, s: &Schedule, grid: &TimeGrid) -> Self {
        let dim = ds.ambient_dim() as f64;
        let ln_n = (ds.len() as f64).ln();
        let nodes = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&t, &w)| {
                let k = s.at(t);
                let b2 = k.b * k.b;
                Node {
                    a: k.a,
                    b: k.b,
                    c: k.c,
                    d: k.d,
                    one_minus_a: s.one_minus_a(t),
                    ln_weight: w.ln(),
                    ln_norm: -0.5 * dim * (TAU * b2).ln() - ln_n,
                    inv_two_b2: 0.5 / b2,
                }
            })
            .collect();
        Self {
            nodes,
            ln_prior: -grid.span().ln(),
        }
    }
}

/// Per-observation anchored geometry.
pub(crate) struct Anchor<'a> {
    pub ds: &'a DataSupport,
    /// Rows `u - x_k`.
    pub diff: Array2<f64>,
    /// `||u - x_k||^2`.
    pub e: Vec<f64>,
    /// `<u - x_k, x_k>`.
    pub g: Vec<f64>,
}

impl<'a> Anchor<'a> {
    pub fn new(ds: &'a DataSupport, u: ArrayView1<f64>) -> Self {
        let diff = &u - ds.points();
        let mut e = Vec::with_capacity(ds.len());
        let mut g = Vec::with_capacity(ds.len());
        for (row, x) in diff.rows().into_iter().zip(ds.points().rows()) {
            e.push(row.dot(&row));
            g.push(row.dot(&x));
        }
        Self { ds, diff, e, g }
    }

    #[inline]
    pub fn sq_dist(&self, k: usize, one_minus_a: f64) -> f64 {
        let n = self.ds.sq_norms()[k];
        let d = self.e[k] + one_minus_a * (2.0 * self.g[k] + one_minus_a * n);
        d.max(0.0)
    }
}

/// Joint posterior over nodes and components.
pub(crate) struct Joint {
    /// `ln p(u | t_i) + ln p(t_i)`. Exact for every node when built with
    /// `full = true`; pruned nodes otherwise hold an upper bound.
    pub log_joint: Vec<f64>,
    pub log_evidence: f64,
    /// Normalized node masses including quadrature weights.
    pub probs: Vec<f64>,
    /// Nodes carrying non-negligible mass.
    pub active: Vec<usize>,
    /// Row-major `M x N` responsibilities; only rows in `active` are filled.
    pub resp: Vec<f64>,
    pub n: usize,
}

impl Joint {
    pub fn new(table: &NodeTable, anchor: &Anchor<'_>, full: bool) -> Self {
        let m = table.nodes.len();
        let n = anchor.ds.len();
        let ln_n = (n as f64).ln();
        let sq_norms = anchor.ds.sq_norms();
        // Logits are written into `resp` and exponentiated in place.
        let mut resp = vec![0.0; m * n];
        let mut max_logit = vec![0.0; m];
        for (i, node) in table.nodes.iter().enumerate() {
            let row = &mut resp[i * n..(i + 1) * n];
            let (oma, scale) = (node.one_minus_a, node.inv_two_b2);
            let mut best = f64::NEG_INFINITY;
            for (((l, &e), &g), &nk) in row.iter_mut().zip(&anchor.e).zip(&anchor.g).zip(sq_norms) {
                *l = -(e + oma * (2.0 * g + oma * nk)).max(0.0) * scale;
                best = best.max(*l);
            }
            max_logit[i] = best;
        }

        // Bound each node's log joint mass from both sides before paying
        // for the exponentials: lse_k lies in [max, max + ln N].
        let base: Vec<f64> = table
            .nodes
            .iter()
            .zip(&max_logit)
            .map(|(node, &ml)| ml + node.ln_norm + table.ln_prior + node.ln_weight)
            .collect();
        let floor = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - PRUNE_NATS;

        let mut log_joint = vec![0.0; m];
        let mut active = Vec::new();
        for (i, node) in table.nodes.iter().enumerate() {
            let ml = max_logit[i];
            let out = &mut resp[i * n..(i + 1) * n];
            if !full && base[i] + ln_n < floor {
                log_joint[i] = ml + ln_n + node.ln_norm + table.ln_prior;
                out.fill(0.0);
                continue;
            }
            let mut sum = 0.0;
            for r in out.iter_mut() {
                let z = *r - ml;
                *r = if z > -PRUNE_NATS { z.exp() } else { 0.0 };
                sum += *r;
            }
            let inv = 1.0 / sum;
            for r in out.iter_mut() {
                *r *= inv;
            }
            log_joint[i] = ml + sum.ln() + node.ln_norm + table.ln_prior;
            if base[i] + ln_n >= floor {
                active.push(i);
            }
        }

        let weighted: Vec<f64> = log_joint
            .iter()
            .zip(&table.nodes)
            .map(|(lj, node)| lj + node.ln_weight)
            .collect();
        let log_evidence = if full {
            logsumexp(&weighted)
        } else {
            logsumexp(&active.iter().map(|&i| weighted[i]).collect::<Vec<_>>())
        };
        let mut probs = vec![0.0; m];
        for &i in &active {
            probs[i] = (weighted[i] - log_evidence).exp();
        }
        if full {
            for (p, w) in probs.iter_mut().zip(&weighted) {
                *p = (w - log_evidence).exp();
            }
        }

        Self {
            log_joint,
            log_evidence,
            probs,
            active,
            resp,
            n,
        }
    }

    /// `E[g(node)]` over the node posterior.
    pub fn expect_scalar(&self, table: &NodeTable, g: impl Fn(&Node) -> f64) -> f64 {
        self.active
            .iter()
            .map(|&i| self.probs[i] * g(&table.nodes[i]))
            .sum()
    }

    /// `E[alpha (u - a D*_t) + beta D*_t]` over the node posterior.
    pub fn expect_vector(
        &self,
        table: &NodeTable,
        anchor: &Anchor<'_>,
        alpha: impl Fn(&Node) -> f64,
        beta: impl Fn(&Node) -> f64,
    ) -> Array1<f64> {
        let n = self.n;
        let mut coef_diff = Array1::<f64>::zeros(n);
        let mut coef_point = Array1::<f64>::zeros(n);
        for &i in &self.active {
            let node = &table.nodes[i];
            let p = self.probs[i];
            let al = alpha(node);
            let pa = p * al;
            let pb = p * (al * node.one_minus_a + beta(node));
            let row = &self.resp[i * n..(i + 1) * n];
            for (k, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    coef_diff[k] += pa * w;
                    coef_point[k] += pb * w;
                }
            }
        }
        anchor.diff.t().dot(&coef_diff) + anchor.ds.points().t().dot(&coef_point)
    }
}

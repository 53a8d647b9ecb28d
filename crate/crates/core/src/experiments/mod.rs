//! Experiment drivers shared by the command-line tool and the acceptance
//! suite. Each returns plain rows; file output is left to the caller.

pub mod circles;
pub mod concentration;
pub mod decompose;
pub mod energy_map;
pub mod stability;

/// `n` points spaced evenly in `ln` between `lo` and `hi`, inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

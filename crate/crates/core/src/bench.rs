//! Wall-clock scaling of the filter and smoother in the number of time steps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data_io::{gen_custom, CustomConfig};
use crate::error::Result;
use crate::filtering::{run_filter, run_smoother};
use crate::ssm::{KernelSpec, StateSpaceModel};
use crate::weights::WeightPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub n_t: usize,
    /// Seconds per repetition.
    pub seconds: Vec<f64>,
}

impl BenchRow {
    pub fn min(&self) -> f64 {
        self.seconds.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.seconds.iter().sum::<f64>() / self.seconds.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.seconds.iter().map(|s| (s - m).powi(2)).sum::<f64>() / self.seconds.len().max(2).saturating_sub(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `log(min time)` on `log n_t`, per method.
    pub slopes: Vec<(String, f64)>,
}

impl BenchReport {
    pub fn slope(&self, method: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.0 == method).map(|s| s.1)
    }

    /// Ratio of summed minimum times between two methods.
    pub fn time_ratio(&self, num: &str, den: &str) -> Option<f64> {
        let total = |m: &str| -> f64 { self.rows.iter().filter(|r| r.method == m).map(BenchRow::min).sum() };
        let d = total(den);
        (d > 0.0).then(|| total(num) / d)
    }
}

/// `n_t` doubling from `start` up to and including `end`.
pub fn doubling_sizes(start: usize, end: usize) -> Vec<usize> {
    std::iter::successors(Some(start), |n| Some(n * 2)).take_while(|n| *n <= end).collect()
}

pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Times filter + smoother for each policy over the given sizes.
///
/// Data for each size come from the custom generator with `kernel` on `[0, n_t / 100]`,
/// so the spacing between steps does not change with `n_t`.
pub fn run_bench(
    kernel: &KernelSpec,
    policies: &[(&str, WeightPolicy)],
    sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &n_t in sizes {
        let cfg = CustomConfig {
            kernel: *kernel,
            n_t,
            t_start: 0.0,
            t_end: n_t as f64 / 100.0,
            grid: None,
            contamination: None,
        };
        let ds = gen_custom(&cfg, seed)?;
        let model = StateSpaceModel::assemble(kernel, &ds.grid)?;
        for (name, policy) in policies {
            let mut seconds = Vec::with_capacity(reps);
            for _ in 0..reps {
                let start = Instant::now();
                let trace = run_filter(&model, &ds.times, &ds.y, policy)?;
                let smoothed = run_smoother(&trace)?;
                std::hint::black_box(&smoothed);
                seconds.push(start.elapsed().as_secs_f64());
            }
            rows.push(BenchRow {
                method: name.to_string(),
                n_t,
                seconds,
            });
        }
    }
    let slopes = policies
        .iter()
        .map(|(name, _)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.method == *name)
                .map(|r| (r.n_t as f64, r.min()))
                .unzip();
            (name.to_string(), log_log_slope(&xs, &ys))
        })
        .collect();
    Ok(BenchReport { rows, slopes })
}

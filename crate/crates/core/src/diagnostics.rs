//! Evaluation metrics and the posterior influence function.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filtering::{run_filter, run_smoother, FilterTrace, GaussianState};
use crate::linalg::psd_cholesky;
use crate::ssm::{KernelSpec, StateSpaceModel};
use crate::weights::default_beta;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub nlpd: f64,
    pub ewr: f64,
    pub coverage: Vec<(f64, f64)>,
}

/// Nominal levels reported by [`MetricReport::compute`].
pub const COVERAGE_LEVELS: [f64; 4] = [0.5, 0.8, 0.9, 0.95];

impl MetricReport {
    /// Scores the predictive `N(mean, sd²)` against `y_true`.
    ///
    /// `weights` holds the filter weight at each point (NaN where unobserved) and `sigma`
    /// is the noise standard deviation used for the EWR baseline.
    pub fn compute(y_true: &[f64], mean: &[f64], sd: &[f64], weights: &[f64], sigma: f64) -> Result<Self> {
        let var: Vec<f64> = sd.iter().map(|s| s * s).collect();
        let base = default_beta(sigma);
        let w: Vec<f64> = weights.iter().copied().filter(|w| w.is_finite()).collect();
        let ewr = if w.is_empty() {
            1.0
        } else {
            w.iter().map(|w| w / base).sum::<f64>() / w.len() as f64
        };
        Ok(MetricReport {
            rmse: rmse(y_true, mean)?,
            nlpd: nlpd(y_true, mean, &var)?,
            ewr,
            coverage: coverage(y_true, mean, sd, &COVERAGE_LEVELS)?,
        })
    }
}

fn finite_pairs<'a>(a: &'a [f64], b: &'a [f64]) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x.is_finite() && y.is_finite())
        .map(|(i, (x, y))| (i, *x, *y))
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("length mismatch: {a} vs {b}")))
    }
}

/// Root mean squared error over entries where both values are finite.
pub fn rmse(y_true: &[f64], y_hat: &[f64]) -> Result<f64> {
    same_len(y_true.len(), y_hat.len())?;
    let (n, ss) = finite_pairs(y_true, y_hat).fold((0usize, 0.0), |(n, s), (_, a, b)| (n + 1, s + (a - b).powi(2)));
    if n == 0 {
        return Err(Error::InvalidInput("no points to score".into()));
    }
    Ok((ss / n as f64).sqrt())
}

/// Mean negative log predictive density under independent Gaussians.
pub fn nlpd(y_true: &[f64], mean: &[f64], var: &[f64]) -> Result<f64> {
    same_len(y_true.len(), mean.len())?;
    same_len(y_true.len(), var.len())?;
    let mut n = 0usize;
    let mut total = 0.0;
    for (i, y, m) in finite_pairs(y_true, mean) {
        let v = var[i];
        if !(v > 0.0) {
            return Err(Error::InvalidInput(format!("predictive variance must be > 0, got {v}")));
        }
        total += 0.5 * (LN_2PI + v.ln() + (y - m).powi(2) / v);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput("no points to score".into()));
    }
    Ok(total / n as f64)
}

/// Expected weight ratio: mean of `w / (σ/√2)` over observed coordinates.
pub fn ewr(trace: &FilterTrace, sigma: f64) -> f64 {
    let base = default_beta(sigma);
    let (n, s) = trace
        .steps
        .iter()
        .flat_map(|st| st.observed_weights())
        .fold((0usize, 0.0), |(n, s), w| (n + 1, s + w / base));
    if n == 0 {
        1.0
    } else {
        s / n as f64
    }
}

/// Fraction of points inside the central interval `mean ± z_q sd` for each nominal level `q`.
pub fn coverage(y_true: &[f64], mean: &[f64], sd: &[f64], quantiles: &[f64]) -> Result<Vec<(f64, f64)>> {
    same_len(y_true.len(), mean.len())?;
    same_len(y_true.len(), sd.len())?;
    let normal = Normal::standard();
    let pts: Vec<(f64, f64, f64)> = finite_pairs(y_true, mean).map(|(i, y, m)| (y, m, sd[i])).collect();
    if pts.is_empty() {
        return Err(Error::InvalidInput("no points to score".into()));
    }
    quantiles
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidInput(format!("nominal level must lie in (0,1), got {q}")));
            }
            let z = normal.inverse_cdf(0.5 + 0.5 * q);
            let inside = pts.iter().filter(|(y, m, s)| (y - m).abs() <= z * s).count();
            Ok((q, inside as f64 / pts.len() as f64))
        })
        .collect()
}

/// `KL(p ‖ q)` between multivariate Gaussians.
pub fn kl_gaussian(
    p_mean: &DVector<f64>,
    p_cov: &DMatrix<f64>,
    q_mean: &DVector<f64>,
    q_cov: &DMatrix<f64>,
) -> Result<f64> {
    let k = p_mean.len() as f64;
    let cp = psd_cholesky(p_cov)?;
    let cq = psd_cholesky(q_cov)?;
    let diff = q_mean - p_mean;
    let tr = cq.factor.solve(p_cov).trace();
    let maha = diff.dot(&cq.factor.solve(&diff));
    Ok((0.5 * (tr + maha - k + cq.log_det() - cp.log_det())).max(0.0))
}

/// Joint marginal of `f` over all sites at one step.
pub fn f_marginal(state: &GaussianState, n_s: usize, block_dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let idx: Vec<usize> = (0..n_s).map(|j| j * block_dim).collect();
    let mean = DVector::from_iterator(n_s, idx.iter().map(|&i| state.mean[i]));
    let cov = state.cov.select_rows(idx.iter()).select_columns(idx.iter());
    (mean, cov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PifCurve {
    pub magnitudes: Vec<f64>,
    pub values: Vec<f64>,
}

impl PifCurve {
    /// True if the last two values differ by less than `rel`.
    pub fn plateaus(&self, rel: f64) -> bool {
        match self.values.as_slice() {
            [.., a, b] => (b - a).abs() <= rel * a.abs().max(f64::MIN_POSITIVE),
            _ => false,
        }
    }
}

/// Posterior influence of adding `magnitude` to `y[(m, j)]`.
///
/// For each magnitude the smoother is rerun and the KL divergences between the clean and
/// contaminated per-step smoothed marginals of `f` are summed.
pub fn pif_curve(
    spec: &KernelSpec,
    grid: &DMatrix<f64>,
    times: &[f64],
    y: &DMatrix<f64>,
    policy: &crate::weights::WeightPolicy,
    site: (usize, usize),
    magnitudes: &[f64],
) -> Result<PifCurve> {
    let (m, j) = site;
    if m >= y.nrows() || j >= y.ncols() || !y[(m, j)].is_finite() {
        return Err(Error::InvalidInput(format!("contamination site ({m}, {j}) is not an observed point")));
    }
    let model = StateSpaceModel::assemble(spec, grid)?;
    let smoothed = |data: &DMatrix<f64>| -> Result<Vec<GaussianState>> {
        run_smoother(&run_filter(&model, times, data, policy)?)
    };
    let clean = smoothed(y)?;
    let (n_s, b) = (model.n_s(), model.block_dim());
    let clean_marg: Vec<_> = clean.iter().map(|s| f_marginal(s, n_s, b)).collect();
    let mut values = Vec::with_capacity(magnitudes.len());
    for &mag in magnitudes {
        if mag == 0.0 {
            values.push(0.0);
            continue;
        }
        let mut yc = y.clone();
        yc[(m, j)] += mag;
        let cont = smoothed(&yc)?;
        let mut total = 0.0;
        for (st, (pm, pc)) in cont.iter().zip(&clean_marg) {
            let (qm, qc) = f_marginal(st, n_s, b);
            total += kl_gaussian(pm, pc, &qm, &qc)?;
        }
        values.push(total);
    }
    Ok(PifCurve {
        magnitudes: magnitudes.to_vec(),
        values,
    })
}

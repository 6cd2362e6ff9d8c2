//! Dense O(N³) GP and RCGP posteriors over the full space-time covariance.
//!
//! These are reference implementations used to check the state-space recursions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{psd_cholesky, symmetrize};
use crate::ssm::KernelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePoint {
    pub s: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(s: Vec<f64>, t: f64) -> Self {
        SpaceTimePoint { s, t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Prior covariance between two point sets. `origin` is the start time of a Wiener prior.
pub fn prior_covariance(spec: &KernelSpec, a: &[SpaceTimePoint], b: &[SpaceTimePoint], origin: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        spec.spatial_cov(&a[i].s, &b[j].s) * spec.temporal.cov(a[i].t, b[j].t, origin)
    })
}

fn origin_of(x: &[SpaceTimePoint]) -> f64 {
    x.iter().map(|p| p.t).fold(f64::INFINITY, f64::min)
}

/// Standard GP posterior at `queries` with zero prior mean.
pub fn batch_gp(
    spec: &KernelSpec,
    x: &[SpaceTimePoint],
    y: &DVector<f64>,
    queries: &[SpaceTimePoint],
) -> Result<BatchPosterior> {
    let noise = DVector::from_element(x.len(), spec.noise_variance);
    posterior(spec, x, y, queries, &noise, &DVector::zeros(x.len()))
}

/// RCGP posterior with fixed per-datum weights `w` and `∇_y log w²`.
pub fn batch_rcgp(
    spec: &KernelSpec,
    x: &[SpaceTimePoint],
    y: &DVector<f64>,
    queries: &[SpaceTimePoint],
    w: &DVector<f64>,
    dlogw2: &DVector<f64>,
) -> Result<BatchPosterior> {
    if w.len() != x.len() || dlogw2.len() != x.len() {
        return Err(Error::InvalidInput("weight vectors must match the number of data".into()));
    }
    if let Some(v) = w.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!("weights must be positive, got {v}")));
    }
    let s2 = spec.noise_variance;
    let noise = w.map(|wi| s2 * 0.5 * s2 / (wi * wi));
    let m_w = dlogw2 * s2;
    posterior(spec, x, y, queries, &noise, &m_w)
}

fn posterior(
    spec: &KernelSpec,
    x: &[SpaceTimePoint],
    y: &DVector<f64>,
    queries: &[SpaceTimePoint],
    noise: &DVector<f64>,
    shift: &DVector<f64>,
) -> Result<BatchPosterior> {
    spec.validate()?;
    if y.len() != x.len() {
        return Err(Error::InvalidInput(format!("{} inputs but {} observations", x.len(), y.len())));
    }
    let origin = origin_of(x).min(origin_of(queries));
    let mut k = prior_covariance(spec, x, x, origin);
    for i in 0..x.len() {
        k[(i, i)] += noise[i];
    }
    let chol = psd_cholesky(&k)?;
    let k_star = prior_covariance(spec, x, queries, origin);
    let k_ss = prior_covariance(spec, queries, queries, origin);
    let alpha = chol.factor.solve(&(y - shift));
    let v = chol.factor.solve(&k_star);
    let mean = k_star.transpose() * alpha;
    let cov = symmetrize(&(k_ss - k_star.transpose() * v));
    Ok(BatchPosterior { mean, cov })
}

#![allow(dead_code)]

pub mod props;

use nalgebra::{DMatrix, DVector};
use strcgp::batch::{prior_covariance, SpaceTimePoint};
use strcgp::data_io::SimRng;
use strcgp::filtering::{run_filter, run_smoother};
use strcgp::ssm::{KernelSpec, SpatialFamily, SpatialKernel, StateSpaceModel, TemporalFamily, TemporalKernel};
use strcgp::weights::WeightPolicy;

pub struct Instance {
    pub spec: KernelSpec,
    pub grid: DMatrix<f64>,
    pub times: Vec<f64>,
    pub y: DMatrix<f64>,
}

pub fn uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// Sorted times on `[0, 1]` with gaps of at least `min_gap`.
pub fn random_times(rng: &mut SimRng, n: usize, min_gap: f64) -> Vec<f64> {
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += min_gap + rng.uniform() * 0.2;
            t
        })
        .collect()
}

pub fn random_grid(rng: &mut SimRng, n_s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_s, 2, |_, _| uniform(rng, -1.0, 1.0))
}

/// Small random problem; `n_s == 1` gives a purely temporal spec with some chance.
pub fn random_instance(rng: &mut SimRng, family: TemporalFamily, max_t: usize, max_s: usize) -> Instance {
    let n_t = 1 + (rng.uniform() * max_t as f64) as usize;
    let n_t = n_t.min(max_t);
    let n_s = (1 + (rng.uniform() * max_s as f64) as usize).min(max_s);
    let temporal = TemporalKernel::new(family, uniform(rng, 0.2, 1.5), uniform(rng, 0.5, 1.5));
    let spatial = if n_s == 1 && rng.uniform() < 0.5 {
        None
    } else {
        let fam = if rng.uniform() < 0.5 {
            SpatialFamily::SquaredExponential
        } else {
            SpatialFamily::Matern32
        };
        Some(SpatialKernel::new(fam, uniform(rng, 0.3, 1.5), uniform(rng, 0.5, 1.5)))
    };
    let spec = KernelSpec {
        temporal,
        spatial,
        noise_variance: uniform(rng, 0.05, 0.5),
    };
    let grid = if spatial.is_some() { random_grid(rng, n_s) } else { DMatrix::zeros(1, 0) };
    let times = random_times(rng, n_t, 0.02);
    let y = DMatrix::from_fn(n_t, grid.nrows(), |_, _| 2.0 * rng.normal());
    Instance { spec, grid, times, y }
}

/// Space-time points in `(k, j)` row-major order.
pub fn points(grid: &DMatrix<f64>, times: &[f64]) -> Vec<SpaceTimePoint> {
    let mut out = Vec::new();
    for &t in times {
        for j in 0..grid.nrows() {
            out.push(SpaceTimePoint::new(grid.row(j).iter().copied().collect(), t));
        }
    }
    out
}

pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.len(), m.transpose().iter().copied())
}

/// Smoothed means and variances of `f`, flattened in `(k, j)` order.
pub fn smoothed_marginals(inst: &Instance, policy: &WeightPolicy) -> (DVector<f64>, DVector<f64>) {
    let model = StateSpaceModel::assemble(&inst.spec, &inst.grid).unwrap();
    let trace = run_filter(&model, &inst.times, &inst.y, policy).unwrap();
    let sm = run_smoother(&trace).unwrap();
    let (m, v) = trace.f_marginals(&sm);
    (flatten(&m), flatten(&v))
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Prior covariance of `f` at all `(k, j)` obtained by chaining transitions.
pub fn chained_prior_cov(model: &StateSpaceModel, times: &[f64]) -> DMatrix<f64> {
    let n_t = times.len();
    let n_s = model.n_s();
    let mut p = vec![model.sigma0.clone()];
    let mut trans = Vec::new();
    for k in 1..n_t {
        let tr = model.discretize(times[k] - times[k - 1]).unwrap();
        p.push(tr.propagate(&p[k - 1]) + &tr.sigma);
        trans.push(tr);
    }
    let h = &model.h;
    let mut out = DMatrix::zeros(n_t * n_s, n_t * n_s);
    for k in 0..n_t {
        // Cov(z_l, z_k) = A_{l-1} ... A_k P_k for l ≥ k
        let mut c = p[k].clone();
        for l in k..n_t {
            if l > k {
                c = trans[l - 1].left_mul(&c);
            }
            let block = h * &c * h.transpose();
            out.view_mut((l * n_s, k * n_s), (n_s, n_s)).copy_from(&block);
            out.view_mut((k * n_s, l * n_s), (n_s, n_s)).copy_from(&block.transpose());
        }
    }
    out
}

pub fn closed_form_prior_cov(spec: &KernelSpec, grid: &DMatrix<f64>, times: &[f64]) -> DMatrix<f64> {
    let pts = points(grid, times);
    prior_covariance(spec, &pts, &pts, times[0])
}

/// Temporal kernel written out independently of the library.
pub fn temporal_oracle(k: &TemporalKernel, t: f64, t2: f64, origin: f64) -> f64 {
    let s2 = k.amplitude * k.amplitude;
    let r = (t - t2).abs() / k.lengthscale;
    match k.family {
        TemporalFamily::Exponential => s2 * (-r).exp(),
        TemporalFamily::Matern32 => s2 * (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp(),
        TemporalFamily::Matern52 => {
            s2 * (1.0 + 5f64.sqrt() * r + 5.0 * r * r / 3.0) * (-(5f64.sqrt()) * r).exp()
        }
        // Brownian motion started at `origin` from a tiny diffuse state
        TemporalFamily::Wiener => s2 * (1e-6 + t.min(t2) - origin),
    }
}

pub fn spatial_oracle(k: &SpatialKernel, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let s2 = k.amplitude * k.amplitude;
    match k.family {
        SpatialFamily::SquaredExponential => s2 * (-r2 / (2.0 * k.lengthscale * k.lengthscale)).exp(),
        SpatialFamily::Matern32 => {
            let x = 3f64.sqrt() * r2.sqrt() / k.lengthscale;
            s2 * (1.0 + x) * (-x).exp()
        }
    }
}

/// Dense prior covariance over all `(k, j)` from the independent kernels.
pub fn dense_prior(spec: &KernelSpec, grid: &DMatrix<f64>, times: &[f64]) -> DMatrix<f64> {
    let n_s = grid.nrows();
    let n = times.len() * n_s;
    let site = |j: usize| -> Vec<f64> { grid.row(j).iter().copied().collect() };
    DMatrix::from_fn(n, n, |a, b| {
        let (ka, ja) = (a / n_s, a % n_s);
        let (kb, jb) = (b / n_s, b % n_s);
        let ks = spec.spatial.as_ref().map_or(1.0, |s| spatial_oracle(s, &site(ja), &site(jb)));
        ks * temporal_oracle(&spec.temporal, times[ka], times[kb], times[0])
    })
}

/// Gaussian conditioning `f | y` with independent noise, written with a plain Cholesky.
///
/// Only entries where `y` is finite are used. Returns marginal means and variances at all points.
pub fn dense_posterior(k: &DMatrix<f64>, y: &DVector<f64>, noise: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let obs: Vec<usize> = (0..y.len()).filter(|&i| y[i].is_finite()).collect();
    let m = obs.len();
    let a = DMatrix::from_fn(m, m, |r, c| k[(obs[r], obs[c])] + if r == c { noise[obs[r]] } else { 0.0 });
    let kx = DMatrix::from_fn(k.nrows(), m, |r, c| k[(r, obs[c])]);
    let yo = DVector::from_iterator(m, obs.iter().map(|&i| y[i]));
    let chol = a.cholesky().expect("oracle system not SPD");
    let mean = &kx * chol.solve(&yo);
    let v = chol.solve(&kx.transpose());
    let var = DVector::from_fn(k.nrows(), |i, _| k[(i, i)] - (kx.row(i) * v.column(i))[0]);
    (mean, var)
}

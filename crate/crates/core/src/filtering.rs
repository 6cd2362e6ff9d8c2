//! Kalman filtering and RTS smoothing with a generalised-Bayes update.
//!
//! With weights `w` the update uses a heteroscedastic pseudo-observation: noise
//! covariance `σ² J_w`, `J_w = diag(σ²/2 · w⁻²)`, and the observation shifted by
//! `σ² ∇_y log w²`. A constant weight `σ/√2` gives `J_w = I` and the ordinary Kalman update.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{psd_cholesky, psd_solve, symmetrize};
use crate::ssm::{KernelSpec, StateSpaceModel, Transition, TransitionCache};
use crate::weights::{FixedField, WeightPolicy, WeightVector};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time: f64,
}

/// One-step-ahead predictive of `y_k`: `N(f̂_k, Ŝ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMoments {
    pub f_hat: DVector<f64>,
    pub s_hat: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterStep {
    pub predicted: GaussianState,
    pub updated: GaussianState,
    pub predictive: PredictiveMoments,
    pub weights: WeightVector,
    /// `log N(y_k; f̂_k, Ŝ_k)` over the observed coordinates (0 when none are observed).
    pub log_pred_density: f64,
    pub mask: Vec<bool>,
}

impl FilterStep {
    pub fn observed_weights(&self) -> Vec<f64> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(j, _)| self.weights.w[j])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub steps: Vec<FilterStep>,
    /// `transitions[k]` maps step `k` to `k + 1`.
    pub transitions: Vec<Arc<Transition>>,
    pub n_s: usize,
    pub block_dim: usize,
    pub noise_variance: f64,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn log_pred_densities(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.log_pred_density).collect()
    }

    pub fn filtered(&self) -> Vec<GaussianState> {
        self.steps.iter().map(|s| s.updated.clone()).collect()
    }

    /// Means and variances of `f` at every `(k, j)` from a list of states (`n_t × n_s` each).
    pub fn f_marginals(&self, states: &[GaussianState]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n_t = states.len();
        let mut mean = DMatrix::zeros(n_t, self.n_s);
        let mut var = DMatrix::zeros(n_t, self.n_s);
        for (k, st) in states.iter().enumerate() {
            for j in 0..self.n_s {
                let i = j * self.block_dim;
                mean[(k, j)] = st.mean[i];
                var[(k, j)] = st.cov[(i, i)].max(0.0);
            }
        }
        (mean, var)
    }

    /// Weights as an `n_t × n_s` matrix.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.n_s, |k, j| self.steps[k].weights.w[j])
    }

    pub fn mask_matrix(&self) -> DMatrix<bool> {
        DMatrix::from_fn(self.len(), self.n_s, |k, j| self.steps[k].mask[j])
    }
}

pub fn predict(state: &GaussianState, trans: &Transition) -> Result<GaussianState> {
    let d = trans.a_block.nrows() * trans.n_s();
    if state.mean.len() != d || state.cov.nrows() != d || state.cov.ncols() != d {
        return Err(Error::InvalidInput(format!(
            "state of dimension {} does not match transition of dimension {d}",
            state.mean.len()
        )));
    }
    let cov = symmetrize(&(trans.propagate(&state.cov) + &trans.sigma));
    Ok(GaussianState {
        mean: trans.apply_mean(&state.mean),
        cov,
        time: state.time + trans.dt,
    })
}

pub fn predictive_moments(state: &GaussianState, model: &StateSpaceModel) -> PredictiveMoments {
    let n_s = model.n_s();
    let sigma2 = model.noise_variance();
    let f_hat = DVector::from_fn(n_s, |j, _| state.mean[model.obs_index(j)]);
    let s_hat = DMatrix::from_fn(n_s, n_s, |i, j| {
        state.cov[(model.obs_index(i), model.obs_index(j))] + if i == j { sigma2 } else { 0.0 }
    });
    PredictiveMoments { f_hat, s_hat }
}

/// Gaussian log density of `x` under `N(mean, cov)`, via the shared jittered Cholesky.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = psd_cholesky(cov)?;
    let r = x - mean;
    let z = chol.factor.solve(&r);
    let n = x.len() as f64;
    Ok(-0.5 * (n * LN_2PI + chol.log_det() + r.dot(&z)))
}

/// Generalised-Bayes update. Coordinates with `mask[j] == false` are ignored.
pub fn update_gb(
    state: &GaussianState,
    y: &DVector<f64>,
    mask: &[bool],
    model: &StateSpaceModel,
    weights: &WeightVector,
    step: usize,
) -> Result<(GaussianState, f64)> {
    let obs: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if obs.is_empty() {
        return Ok((state.clone(), 0.0));
    }
    let sigma2 = model.noise_variance();
    let idx: Vec<usize> = obs.iter().map(|&j| model.obs_index(j)).collect();
    let m = obs.len();

    // P Hᵀ restricted to observed rows, transposed: H P (m × d)
    let hp = state.cov.select_rows(idx.iter());
    let hph = hp.select_columns(idx.iter());

    let y_o = DVector::from_iterator(m, obs.iter().map(|&j| y[j]));
    let f_hat = DVector::from_iterator(m, idx.iter().map(|&i| state.mean[i]));

    let mut s_hat = hph.clone();
    for i in 0..m {
        s_hat[(i, i)] += sigma2;
    }
    let log_pred = gaussian_log_density(&y_o, &f_hat, &s_hat).map_err(|_| Error::SingularInnovation { step })?;

    let mut s_w = hph;
    let mut shift = DVector::zeros(m);
    for (a, &j) in obs.iter().enumerate() {
        let w = weights.w[j];
        let jw = 0.5 * sigma2 / (w * w);
        s_w[(a, a)] += sigma2 * jw;
        shift[a] = sigma2 * weights.dlogw2[j];
    }
    let resid = y_o - f_hat - shift;
    let solved = psd_solve(&s_w, &hp).map_err(|_| Error::SingularInnovation { step })?;
    // Kᵀ = (S^w)⁻¹ H P
    let kt = solved.x;
    let mean = &state.mean + kt.transpose() * resid;
    let cov = symmetrize(&(&state.cov - hp.transpose() * &kt));
    Ok((
        GaussianState {
            mean,
            cov,
            time: state.time,
        },
        log_pred,
    ))
}

fn check_inputs(model: &StateSpaceModel, times: &[f64], y: &DMatrix<f64>) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("no time steps".into()));
    }
    if y.nrows() != times.len() || y.ncols() != model.n_s() {
        return Err(Error::InvalidInput(format!(
            "observations are {}x{}, expected {}x{}",
            y.nrows(),
            y.ncols(),
            times.len(),
            model.n_s()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite timestamp".into()));
    }
    if y.iter().any(|v| v.is_infinite()) {
        return Err(Error::InvalidInput("infinite observation".into()));
    }
    Ok(())
}

/// Forward pass over `n_t` steps. Missing observations are NaN in `y` (`n_t × n_s`).
pub fn run_filter(
    model: &StateSpaceModel,
    times: &[f64],
    y: &DMatrix<f64>,
    policy: &WeightPolicy,
) -> Result<FilterTrace> {
    check_inputs(model, times, y)?;
    policy.validate()?;
    let sigma = model.spec.noise_sd();
    let mut cache = TransitionCache::new(model);
    let mut steps: Vec<FilterStep> = Vec::with_capacity(times.len());
    let mut transitions = Vec::with_capacity(times.len().saturating_sub(1));
    let d = model.state_dim();

    for (k, &t) in times.iter().enumerate() {
        let predicted = match steps.last() {
            None => GaussianState {
                mean: DVector::zeros(d),
                cov: model.sigma0.clone(),
                time: t,
            },
            Some(prev) => {
                let trans = cache.get(t - prev.updated.time)?;
                let mut p = predict(&prev.updated, &trans)?;
                p.time = t;
                transitions.push(trans);
                p
            }
        };
        let y_k: DVector<f64> = y.row(k).transpose();
        let mask: Vec<bool> = y_k.iter().map(|v| v.is_finite()).collect();
        let predictive = predictive_moments(&predicted, model);
        let weights = policy.evaluate(k, &y_k, &predictive.f_hat, &predictive.s_hat.diagonal(), sigma)?;
        let (updated, log_pred_density) = update_gb(&predicted, &y_k, &mask, model, &weights, k)?;
        steps.push(FilterStep {
            predicted,
            updated,
            predictive,
            weights,
            log_pred_density,
            mask,
        });
    }
    Ok(FilterTrace {
        steps,
        transitions,
        n_s: model.n_s(),
        block_dim: model.block_dim(),
        noise_variance: model.noise_variance(),
    })
}

/// Rauch-Tung-Striebel backward pass over a completed filter trace.
pub fn run_smoother(trace: &FilterTrace) -> Result<Vec<GaussianState>> {
    let n = trace.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![trace.steps[n - 1].updated.clone(); n];
    for k in (0..n - 1).rev() {
        let filt = &trace.steps[k].updated;
        let pred_next = &trace.steps[k + 1].predicted;
        let trans = &trace.transitions[k];
        // Gᵀ = P_{k+1|k}⁻¹ A P_{k|k}
        let gt = psd_solve(&pred_next.cov, &trans.left_mul(&filt.cov))?.x;
        let next = &out[k + 1];
        let mean = &filt.mean + gt.transpose() * (&next.mean - &pred_next.mean);
        let cov = symmetrize(&(&filt.cov + gt.transpose() * (&next.cov - &pred_next.cov) * &gt));
        out[k] = GaussianState {
            mean,
            cov,
            time: filt.time,
        };
    }
    Ok(out)
}

/// A space-time query location.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPoint {
    pub s: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Source {
    #[default]
    Smoothed,
    Filtered,
}

/// Latent marginals at arbitrary query points.
///
/// Query sites are appended to the grid and query times merged into the time axis, with
/// the new entries permanently unobserved. Times after the last observation are forecast;
/// times before the first one are rejected.
pub fn predict_at(
    spec: &KernelSpec,
    grid: &DMatrix<f64>,
    times: &[f64],
    y: &DMatrix<f64>,
    policy: &WeightPolicy,
    queries: &[QueryPoint],
    source: Source,
) -> Result<Vec<Marginal>> {
    if times.is_empty() {
        return Err(Error::InvalidInput("no time steps".into()));
    }
    let d_s = grid.ncols();
    let t_first = times[0];
    for q in queries {
        if q.s.len() != d_s {
            return Err(Error::GridMismatch(format!(
                "query has {} spatial coordinates, grid has {d_s}",
                q.s.len()
            )));
        }
        if !(q.t >= t_first) {
            return Err(Error::InvalidInput(format!(
                "query time {} precedes the first observation at {t_first}",
                q.t
            )));
        }
    }

    let mut sites: Vec<Vec<f64>> = (0..grid.nrows()).map(|i| grid.row(i).iter().copied().collect()).collect();
    let n_s0 = sites.len();
    let mut site_of = Vec::with_capacity(queries.len());
    for q in queries {
        let idx = match sites.iter().position(|s| *s == q.s) {
            Some(i) => i,
            None => {
                sites.push(q.s.clone());
                sites.len() - 1
            }
        };
        site_of.push(idx);
    }

    let mut all_times: Vec<f64> = times.to_vec();
    all_times.extend(queries.iter().map(|q| q.t));
    all_times.sort_by(|a, b| a.total_cmp(b));
    all_times.dedup();

    let aug_grid = DMatrix::from_fn(sites.len(), d_s, |i, j| sites[i][j]);
    let mut row_map = vec![None; all_times.len()];
    let mut aug_y = DMatrix::from_element(all_times.len(), sites.len(), f64::NAN);
    for (k, t) in times.iter().enumerate() {
        let r = all_times
            .binary_search_by(|v| v.total_cmp(t))
            .map_err(|_| Error::InvalidInput("timestamps must be strictly increasing".into()))?;
        row_map[r] = Some(k);
        for j in 0..n_s0 {
            aug_y[(r, j)] = y[(k, j)];
        }
    }
    let aug_policy = remap_policy(policy, &row_map, n_s0, sites.len());
    let model = StateSpaceModel::assemble(spec, &aug_grid)?;
    let trace = run_filter(&model, &all_times, &aug_y, &aug_policy)?;
    let states = match source {
        Source::Smoothed => run_smoother(&trace)?,
        Source::Filtered => trace.filtered(),
    };
    let b = model.block_dim();
    Ok(queries
        .iter()
        .zip(&site_of)
        .map(|(q, &j)| {
            let k = all_times.binary_search_by(|v| v.total_cmp(&q.t)).expect("query time is on the grid");
            let st = &states[k];
            Marginal {
                mean: st.mean[j * b],
                var: st.cov[(j * b, j * b)].max(0.0),
            }
        })
        .collect())
}

fn remap_policy(policy: &WeightPolicy, row_map: &[Option<usize>], n_s0: usize, n_s: usize) -> WeightPolicy {
    let remap = |f: &FixedField| match f {
        FixedField::Constant(v) => FixedField::Constant(*v),
        FixedField::PerPoint(m) => FixedField::PerPoint(DMatrix::from_fn(row_map.len(), n_s, |r, j| {
            match row_map[r] {
                Some(k) if j < n_s0 => m[(k, j)],
                _ => 1.0,
            }
        })),
    };
    match policy {
        WeightPolicy::FixedImq { gamma, c, alpha, beta } => WeightPolicy::FixedImq {
            gamma: remap(gamma),
            c: remap(c),
            alpha: *alpha,
            beta: *beta,
        },
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{SpatialFamily, SpatialKernel, TemporalFamily, TemporalKernel};
    use crate::weights::default_beta;
    use approx::assert_relative_eq;

    fn scalar_model(noise: f64) -> StateSpaceModel {
        let spec = KernelSpec::temporal_only(TemporalKernel::new(TemporalFamily::Exponential, 1.0, 1.0), noise);
        StateSpaceModel::assemble(&spec, &DMatrix::zeros(1, 0)).unwrap()
    }

    fn two_site_model() -> StateSpaceModel {
        let spec = KernelSpec {
            temporal: TemporalKernel::new(TemporalFamily::Matern32, 0.5, 1.1),
            spatial: Some(SpatialKernel::new(SpatialFamily::SquaredExponential, 0.8, 1.0)),
            noise_variance: 0.2,
        };
        StateSpaceModel::assemble(&spec, &DMatrix::from_row_slice(2, 1, &[0.0, 0.5])).unwrap()
    }

    #[test]
    fn predict_scalar_example() {
        let m = scalar_model(0.1);
        let mut tr = m.discretize(1.0).unwrap();
        tr.a_block[(0, 0)] = 0.5;
        tr.sigma[(0, 0)] = 0.75;
        let s = GaussianState {
            mean: DVector::from_element(1, 1.0),
            cov: DMatrix::from_element(1, 1, 1.0),
            time: 0.0,
        };
        let p = predict(&s, &tr).unwrap();
        assert_relative_eq!(p.mean[0], 0.5);
        assert_relative_eq!(p.cov[(0, 0)], 1.0);
    }

    #[test]
    fn predict_identity_and_zero_mean() {
        let m = two_site_model();
        let mut tr = m.discretize(0.3).unwrap();
        let s = GaussianState {
            mean: DVector::from_fn(4, |i, _| i as f64),
            cov: m.sigma0.clone(),
            time: 0.0,
        };
        let zero = GaussianState {
            mean: DVector::zeros(4),
            ..s.clone()
        };
        assert_eq!(predict(&zero, &tr).unwrap().mean, DVector::zeros(4));
        tr.a_block = DMatrix::identity(2, 2);
        tr.sigma = DMatrix::zeros(4, 4);
        let p = predict(&s, &tr).unwrap();
        assert_eq!(p.mean, s.mean);
        assert!((p.cov - s.cov).norm() < 1e-15);
        let bad = GaussianState {
            mean: DVector::zeros(3),
            cov: DMatrix::zeros(3, 3),
            time: 0.0,
        };
        assert!(matches!(predict(&bad, &tr), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn predictive_examples() {
        let m = two_site_model();
        let s = GaussianState {
            mean: DVector::zeros(4),
            cov: DMatrix::zeros(4, 4),
            time: 0.0,
        };
        assert_eq!(predictive_moments(&s, &m).s_hat, DMatrix::identity(2, 2) * 0.2);
        let s0 = GaussianState {
            cov: m.sigma0.clone(),
            ..s
        };
        let expected = &m.k_s * 1.21 + DMatrix::<f64>::identity(2, 2) * 0.2;
        assert!((predictive_moments(&s0, &m).s_hat - expected).norm() < 1e-10);
    }

    fn standard_kalman(state: &GaussianState, y: &DVector<f64>, h: &DMatrix<f64>, r: f64) -> GaussianState {
        let s = h * &state.cov * h.transpose() + DMatrix::identity(h.nrows(), h.nrows()) * r;
        let k = &state.cov * h.transpose() * s.try_inverse().unwrap();
        let mean = &state.mean + &k * (y - h * &state.mean);
        let cov = (DMatrix::identity(state.cov.nrows(), state.cov.nrows()) - &k * h) * &state.cov;
        GaussianState {
            mean,
            cov,
            time: state.time,
        }
    }

    fn some_state(m: &StateSpaceModel) -> GaussianState {
        let d = m.state_dim();
        GaussianState {
            mean: DVector::from_fn(d, |i, _| 0.3 * i as f64 - 0.4),
            cov: &m.sigma0 + DMatrix::from_fn(d, d, |i, j| 0.05 / (1.0 + (i + j) as f64)),
            time: 0.0,
        }
    }

    #[test]
    fn constant_weight_is_standard_kalman() {
        let m = two_site_model();
        let st = some_state(&m);
        let y = DVector::from_vec(vec![0.7, -1.2]);
        let w = WeightVector::constant(2, default_beta(0.2f64.sqrt()));
        let (gb, _) = update_gb(&st, &y, &[true, true], &m, &w, 0).unwrap();
        let kf = standard_kalman(&st, &y, &m.h, 0.2);
        assert!((&gb.mean - &kf.mean).norm() < 1e-12);
        assert!((&gb.cov - &kf.cov).norm() < 1e-12);
    }

    #[test]
    fn innovation_form_equals_information_form() {
        let m = two_site_model();
        let st = some_state(&m);
        let y = DVector::from_vec(vec![2.5, -0.1]);
        let sigma2 = 0.2;
        let w = WeightVector {
            w: DVector::from_vec(vec![0.05, 0.4]),
            dlogw2: DVector::from_vec(vec![-1.3, 0.2]),
        };
        let (gb, _) = update_gb(&st, &y, &[true, true], &m, &w, 0).unwrap();

        // P⁺ = (P⁻¹ + Hᵀ R⁻¹ H)⁻¹, m⁺ = P⁺ (P⁻¹ m + Hᵀ R⁻¹ (y − σ² ∇ log w²)), R = σ² J_w
        let r_inv = DMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                1.0 / (sigma2 * 0.5 * sigma2 / (w.w[i] * w.w[i]))
            } else {
                0.0
            }
        });
        let p_inv = st.cov.clone().try_inverse().unwrap();
        let post = (&p_inv + m.h.transpose() * &r_inv * &m.h).try_inverse().unwrap();
        let pseudo = &y - &w.dlogw2 * sigma2;
        let mean = &post * (&p_inv * &st.mean + m.h.transpose() * &r_inv * pseudo);
        assert!((&gb.mean - &mean).norm() < 1e-9 * (1.0 + mean.norm()));
        assert!((&gb.cov - &post).norm() < 1e-9 * (1.0 + post.norm()));
    }

    #[test]
    fn fully_masked_step_is_neutral() {
        let m = two_site_model();
        let st = some_state(&m);
        let y = DVector::from_vec(vec![f64::NAN, f64::NAN]);
        let w = WeightVector::constant(2, 1.0);
        let (u, lp) = update_gb(&st, &y, &[false, false], &m, &w, 0).unwrap();
        assert_eq!(u, st);
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn partial_mask_uses_observed_rows_only() {
        let m = two_site_model();
        let st = some_state(&m);
        let y = DVector::from_vec(vec![f64::NAN, 0.9]);
        let w = WeightVector::constant(2, default_beta(0.2f64.sqrt()));
        let (gb, lp) = update_gb(&st, &y, &[false, true], &m, &w, 0).unwrap();
        let h = m.h.rows(1, 1).into_owned();
        let kf = standard_kalman(&st, &DVector::from_element(1, 0.9), &h, 0.2);
        assert!((&gb.mean - &kf.mean).norm() < 1e-12);
        let v = st.cov[(2, 2)] + 0.2;
        let r = 0.9 - st.mean[2];
        assert_relative_eq!(lp, -0.5 * (LN_2PI + v.ln() + r * r / v), max_relative = 1e-12);
    }

    #[test]
    fn single_step_log_density() {
        let m = scalar_model(0.3);
        let y = DMatrix::from_element(1, 1, 0.8);
        let tr = run_filter(&m, &[0.0], &y, &WeightPolicy::constant()).unwrap();
        let v: f64 = 1.0 + 0.3;
        let expected = -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + 0.64 / v);
        assert_relative_eq!(tr.steps[0].log_pred_density, expected, max_relative = 1e-12);
        let sm = run_smoother(&tr).unwrap();
        assert_eq!(sm[0], tr.steps[0].updated);
    }

    #[test]
    fn smoother_last_step_equals_filter() {
        let m = two_site_model();
        let y = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, f64::NAN, 0.5, -0.3, f64::NAN]);
        let tr = run_filter(&m, &[0.0, 0.4, 0.5], &y, &WeightPolicy::adaptive()).unwrap();
        let sm = run_smoother(&tr).unwrap();
        assert_eq!(sm[2], tr.steps[2].updated);
        assert!(sm[0] != tr.steps[0].updated);
    }

    #[test]
    fn non_increasing_times_are_rejected() {
        let m = scalar_model(0.1);
        let y = DMatrix::from_element(2, 1, 0.0);
        assert!(matches!(
            run_filter(&m, &[0.0, 0.0], &y, &WeightPolicy::constant()),
            Err(Error::InvalidTimeStep(_))
        ));
        assert!(matches!(
            run_filter(&m, &[0.0], &y, &WeightPolicy::constant()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn forecast_is_projection_of_last_state() {
        let m = scalar_model(0.1);
        let times = [0.0, 0.5, 1.0];
        let y = DMatrix::from_column_slice(3, 1, &[0.3, 0.6, 0.2]);
        let spec = m.spec;
        let tr = run_filter(&m, &times, &y, &WeightPolicy::constant()).unwrap();
        let last = &tr.steps[2].updated;
        let q = QueryPoint { s: vec![], t: 1.4 };
        let out = predict_at(&spec, &m.grid, &times, &y, &WeightPolicy::constant(), &[q], Source::Smoothed).unwrap();
        let a = (-0.4f64).exp();
        assert_relative_eq!(out[0].mean, a * last.mean[0], max_relative = 1e-12);
        assert_relative_eq!(out[0].var, a * a * last.cov[(0, 0)] + 1.0 - a * a, max_relative = 1e-10);

        let early = QueryPoint { s: vec![], t: -0.1 };
        assert!(predict_at(&spec, &m.grid, &times, &y, &WeightPolicy::constant(), &[early], Source::Smoothed).is_err());
    }
}

//! Weight functions for the generalised-Bayes update and summary weights for the robust objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = -0.5;
pub const DEFAULT_DELTA: f64 = 0.05;
/// Relative floor on the adaptive shrinkage, `c² ≥ C2_FLOOR · σ²`.
pub const C2_FLOOR: f64 = 1e-12;

/// `σ/√2`: the constant weight under which the update reduces to the standard Kalman update.
pub fn default_beta(sigma: f64) -> f64 {
    sigma / std::f64::consts::SQRT_2
}

/// Value that is either shared by every point or given per `(k, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedField {
    Constant(f64),
    /// `n_t × n_s`.
    PerPoint(DMatrix<f64>),
}

impl FixedField {
    pub fn at(&self, k: usize, j: usize) -> f64 {
        match self {
            FixedField::Constant(v) => *v,
            FixedField::PerPoint(m) => m[(k, j)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum WeightPolicy {
    /// Standard GP: `w = β` everywhere.
    Constant { beta: Option<f64> },
    /// IMQ weight with centering and shrinkage fixed ahead of time.
    FixedImq {
        gamma: FixedField,
        c: FixedField,
        alpha: f64,
        beta: Option<f64>,
    },
    /// IMQ weight centred at the filtering predictive mean and shrunk by its variance.
    AdaptiveImq { alpha: f64, beta: Option<f64> },
}

impl Default for WeightPolicy {
    fn default() -> Self {
        WeightPolicy::adaptive()
    }
}

/// Weights for one time step. Unobserved coordinates carry `w = β` and a zero gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: DVector<f64>,
    pub dlogw2: DVector<f64>,
}

impl WeightVector {
    pub fn constant(n: usize, beta: f64) -> Self {
        WeightVector {
            w: DVector::from_element(n, beta),
            dlogw2: DVector::zeros(n),
        }
    }
}

/// IMQ weight `β (1 + (y-γ)²/c²)^α` and `∂/∂y log w²`.
pub fn imq_weight(y: f64, gamma: f64, c: f64, beta: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidShrinkage(c));
    }
    imq_weight_c2(y, gamma, c * c, beta, alpha)
}

fn imq_weight_c2(y: f64, gamma: f64, c2: f64, beta: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(c2 > 0.0) || !c2.is_finite() {
        return Err(Error::InvalidShrinkage(c2.sqrt()));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let d = y - gamma;
    let d2 = d * d;
    // ln(1 + d²/c²) without overflow for huge residuals
    let log1p = if d2.is_finite() { (d2 / c2).ln_1p() } else { 2.0 * d.abs().ln() - c2.ln() };
    let w = beta * (alpha * log1p).exp();
    let dlogw2 = if d2.is_finite() {
        4.0 * alpha * d / (c2 + d2)
    } else {
        4.0 * alpha / d
    };
    Ok((w, dlogw2))
}

/// Adaptive IMQ weights with `γ = f̂`, `c² = diag(Ŝ)` and `β = σ/√2`.
pub fn adaptive_weights(
    y: &DVector<f64>,
    f_hat: &DVector<f64>,
    s_hat_diag: &DVector<f64>,
    sigma: f64,
    alpha: f64,
) -> Result<WeightVector> {
    let beta = default_beta(sigma);
    let mut out = WeightVector::constant(y.len(), beta);
    for j in 0..y.len() {
        if !y[j].is_finite() {
            continue;
        }
        let (w, g) = adaptive_coordinate(y[j], f_hat[j], s_hat_diag[j], sigma, beta, alpha)?;
        out.w[j] = w;
        out.dlogw2[j] = g;
    }
    Ok(out)
}

fn adaptive_coordinate(y: f64, f_hat: f64, s_jj: f64, sigma: f64, beta: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(s_jj > 0.0) {
        return Err(Error::InvalidShrinkage(s_jj));
    }
    let c2 = s_jj.max(C2_FLOOR * sigma * sigma);
    imq_weight_c2(y, f_hat, c2, beta, alpha)
}

impl WeightPolicy {
    pub fn constant() -> Self {
        WeightPolicy::Constant { beta: None }
    }

    pub fn adaptive() -> Self {
        WeightPolicy::AdaptiveImq {
            alpha: DEFAULT_ALPHA,
            beta: None,
        }
    }

    pub fn fixed(gamma: FixedField, c: FixedField) -> Self {
        WeightPolicy::FixedImq {
            gamma,
            c,
            alpha: DEFAULT_ALPHA,
            beta: None,
        }
    }

    pub fn is_robust(&self) -> bool {
        !matches!(self, WeightPolicy::Constant { .. })
    }

    pub fn beta(&self, sigma: f64) -> f64 {
        let b = match self {
            WeightPolicy::Constant { beta }
            | WeightPolicy::FixedImq { beta, .. }
            | WeightPolicy::AdaptiveImq { beta, .. } => *beta,
        };
        b.unwrap_or_else(|| default_beta(sigma))
    }

    pub fn validate(&self) -> Result<()> {
        let check_alpha = |a: f64| {
            if a < 0.0 && a.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("IMQ exponent must be negative, got {a}")))
            }
        };
        let beta = match self {
            WeightPolicy::Constant { beta } => *beta,
            WeightPolicy::FixedImq { c, alpha, beta, .. } => {
                check_alpha(*alpha)?;
                match c {
                    FixedField::Constant(v) if !(*v > 0.0) => return Err(Error::InvalidShrinkage(*v)),
                    FixedField::PerPoint(m) => {
                        if let Some(v) = m.iter().find(|v| !(**v > 0.0)) {
                            return Err(Error::InvalidShrinkage(*v));
                        }
                    }
                    _ => {}
                }
                *beta
            }
            WeightPolicy::AdaptiveImq { alpha, beta } => {
                check_alpha(*alpha)?;
                *beta
            }
        };
        match beta {
            Some(b) if !(b > 0.0 && b.is_finite()) => Err(Error::InvalidInput(format!("beta must be > 0, got {b}"))),
            _ => Ok(()),
        }
    }

    /// Weights at step `k`. `f_hat` and `s_hat_diag` come from the one-step predictive
    /// before the update; missing entries of `y` are NaN.
    pub fn evaluate(
        &self,
        k: usize,
        y: &DVector<f64>,
        f_hat: &DVector<f64>,
        s_hat_diag: &DVector<f64>,
        sigma: f64,
    ) -> Result<WeightVector> {
        let beta = self.beta(sigma);
        let mut out = WeightVector::constant(y.len(), beta);
        match self {
            WeightPolicy::Constant { .. } => {}
            WeightPolicy::FixedImq { gamma, c, alpha, .. } => {
                for j in 0..y.len() {
                    if y[j].is_finite() {
                        let (w, g) = imq_weight(y[j], gamma.at(k, j), c.at(k, j), beta, *alpha)?;
                        out.w[j] = w;
                        out.dlogw2[j] = g;
                    }
                }
            }
            WeightPolicy::AdaptiveImq { alpha, .. } => {
                for j in 0..y.len() {
                    if y[j].is_finite() {
                        let (w, g) = adaptive_coordinate(y[j], f_hat[j], s_hat_diag[j], sigma, beta, *alpha)?;
                        out.w[j] = w;
                        out.dlogw2[j] = g;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// How a step's weight vector is reduced to the scalar `w̃_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SummaryMode {
    Quantile { delta: f64 },
    Mean,
    Min,
}

impl Default for SummaryMode {
    fn default() -> Self {
        SummaryMode::Quantile { delta: DEFAULT_DELTA }
    }
}

/// Linear-interpolation quantile of a non-empty sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Unnormalized per-step reduction `Q_k` of the observed weights.
pub fn reduce_step(weights: &[f64], mode: SummaryMode) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    match mode {
        SummaryMode::Quantile { delta } => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidInput(format!("quantile level must lie in (0,1), got {delta}")));
            }
            Ok(quantile(weights, delta))
        }
        SummaryMode::Mean => Ok(weights.iter().sum::<f64>() / weights.len() as f64),
        SummaryMode::Min => Ok(weights.iter().copied().fold(f64::INFINITY, f64::min)),
    }
}

/// Summary weights `w̃_k` for every step.
///
/// `steps[k]` lists the observed weights at step `k`; fully unobserved steps contribute
/// nothing and get `w̃_k = 0`. With a single site the per-step value is the weight itself,
/// otherwise the reduction selected by `mode`. Either way the result sums to one.
pub fn summary_weights(steps: &[Vec<f64>], n_s: usize, mode: SummaryMode) -> Result<Vec<f64>> {
    let raw = steps
        .iter()
        .map(|w| match w.as_slice() {
            [] => Ok(0.0),
            [v] if n_s == 1 => Ok(*v),
            _ => reduce_step(w, mode),
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("summary weights sum to zero".into()));
    }
    Ok(raw.into_iter().map(|q| q / total).collect())
}

//! Hyperparameter objectives built from one-step-ahead predictive densities, and an Adam
//! optimizer over log-parameters with finite-difference gradients.

use std::cell::Cell;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{run_filter, FilterTrace};
use crate::ssm::{KernelSpec, StateSpaceModel, TemporalFamily};
use crate::weights::{summary_weights, SummaryMode, WeightPolicy};

pub const NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    TemporalLengthscale,
    TemporalAmplitude,
    SpatialLengthscale,
    SpatialAmplitude,
    NoiseVariance,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::TemporalLengthscale => "temporal_lengthscale",
            Param::TemporalAmplitude => "temporal_amplitude",
            Param::SpatialLengthscale => "spatial_lengthscale",
            Param::SpatialAmplitude => "spatial_amplitude",
            Param::NoiseVariance => "noise_variance",
        }
    }
}

/// Kernel hyperparameters stored as logs, with a mask of parameters held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub params: Vec<Param>,
    pub log_values: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl ThetaVector {
    /// Parameters present in `spec`. The spatial amplitude only rescales the temporal one
    /// and starts out fixed, as does the unused Wiener lengthscale.
    pub fn from_spec(spec: &KernelSpec) -> Self {
        let mut params = vec![
            (Param::TemporalLengthscale, spec.temporal.lengthscale, spec.temporal.family == TemporalFamily::Wiener),
            (Param::TemporalAmplitude, spec.temporal.amplitude, false),
        ];
        if let Some(sp) = &spec.spatial {
            params.push((Param::SpatialLengthscale, sp.lengthscale, false));
            params.push((Param::SpatialAmplitude, sp.amplitude, true));
        }
        params.push((Param::NoiseVariance, spec.noise_variance, false));
        ThetaVector {
            params: params.iter().map(|p| p.0).collect(),
            log_values: params.iter().map(|p| p.1.ln()).collect(),
            fixed: params.iter().map(|p| p.2).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index(&self, p: Param) -> Option<usize> {
        self.params.iter().position(|q| *q == p)
    }

    pub fn value(&self, p: Param) -> Option<f64> {
        self.index(p).map(|i| self.log_values[i].exp())
    }

    pub fn set_fixed(&mut self, p: Param, fixed: bool) {
        if let Some(i) = self.index(p) {
            self.fixed[i] = fixed;
        }
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.fixed[i]).collect()
    }

    /// Writes the parameters into a copy of `template`.
    pub fn apply(&self, template: &KernelSpec) -> KernelSpec {
        let mut spec = *template;
        for (p, lv) in self.params.iter().zip(&self.log_values) {
            let v = lv.exp();
            match p {
                Param::TemporalLengthscale => spec.temporal.lengthscale = v,
                Param::TemporalAmplitude => spec.temporal.amplitude = v,
                Param::SpatialLengthscale => {
                    if let Some(s) = spec.spatial.as_mut() {
                        s.lengthscale = v;
                    }
                }
                Param::SpatialAmplitude => {
                    if let Some(s) = spec.spatial.as_mut() {
                        s.amplitude = v;
                    }
                }
                Param::NoiseVariance => spec.noise_variance = v.max(NOISE_FLOOR),
            }
        }
        spec
    }
}

/// Scalar function of log-parameters to be minimised.
pub trait Objective {
    fn evaluate(&self, theta: &ThetaVector) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ObjectiveKind {
    /// `φ = −Σ_k log N(y_k; f̂_k, Ŝ_k)`.
    Standard,
    /// `φ_GB = −Σ_k w̃_k log N(y_k; f̂_k, Ŝ_k)`.
    Robust { summary: SummaryMode },
}

#[derive(Debug, Clone)]
pub struct ObjectiveReport {
    pub value: f64,
    pub log_pred_densities: Vec<f64>,
    /// `w̃_k`; all ones for the standard objective.
    pub summary_weights: Vec<f64>,
    pub gradient: Option<Vec<f64>>,
    pub evaluations: usize,
}

/// Objective that runs the filter on a fixed dataset.
pub struct FilterObjective<'a> {
    pub template: KernelSpec,
    pub grid: &'a DMatrix<f64>,
    pub times: &'a [f64],
    pub y: &'a DMatrix<f64>,
    pub policy: WeightPolicy,
    pub kind: ObjectiveKind,
    evaluations: Cell<usize>,
}

impl<'a> FilterObjective<'a> {
    pub fn new(
        template: KernelSpec,
        grid: &'a DMatrix<f64>,
        times: &'a [f64],
        y: &'a DMatrix<f64>,
        policy: WeightPolicy,
        kind: ObjectiveKind,
    ) -> Self {
        FilterObjective {
            template,
            grid,
            times,
            y,
            policy,
            kind,
            evaluations: Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    pub fn trace(&self, theta: &ThetaVector) -> Result<FilterTrace> {
        let spec = theta.apply(&self.template);
        let model = StateSpaceModel::assemble(&spec, self.grid)?;
        self.evaluations.set(self.evaluations.get() + 1);
        run_filter(&model, self.times, self.y, &self.policy)
    }

    pub fn report(&self, theta: &ThetaVector) -> Result<ObjectiveReport> {
        let trace = self.trace(theta)?;
        let mut r = report_from_trace(&trace, self.kind)?;
        r.evaluations = self.evaluations();
        Ok(r)
    }
}

impl Objective for FilterObjective<'_> {
    fn evaluate(&self, theta: &ThetaVector) -> Result<f64> {
        Ok(self.report(theta)?.value)
    }
}

/// Evaluates `φ` or `φ_GB` from a completed filter trace.
pub fn report_from_trace(trace: &FilterTrace, kind: ObjectiveKind) -> Result<ObjectiveReport> {
    let lp = trace.log_pred_densities();
    let wt = match kind {
        ObjectiveKind::Standard => vec![1.0; lp.len()],
        ObjectiveKind::Robust { summary } => {
            let per_step: Vec<Vec<f64>> = trace.steps.iter().map(|s| s.observed_weights()).collect();
            summary_weights(&per_step, trace.n_s, summary)?
        }
    };
    let value = -lp.iter().zip(&wt).map(|(l, w)| l * w).sum::<f64>();
    Ok(ObjectiveReport {
        value,
        log_pred_densities: lp,
        summary_weights: wt,
        gradient: None,
        evaluations: 1,
    })
}

/// `φ` at the parameters of `spec`.
pub fn phi(
    spec: &KernelSpec,
    grid: &DMatrix<f64>,
    times: &[f64],
    y: &DMatrix<f64>,
    policy: &WeightPolicy,
) -> Result<ObjectiveReport> {
    let obj = FilterObjective::new(*spec, grid, times, y, policy.clone(), ObjectiveKind::Standard);
    obj.report(&ThetaVector::from_spec(spec))
}

/// `φ_GB` at the parameters of `spec`.
pub fn phi_gb(
    spec: &KernelSpec,
    grid: &DMatrix<f64>,
    times: &[f64],
    y: &DMatrix<f64>,
    policy: &WeightPolicy,
    summary: SummaryMode,
) -> Result<ObjectiveReport> {
    let obj = FilterObjective::new(*spec, grid, times, y, policy.clone(), ObjectiveKind::Robust { summary });
    obj.report(&ThetaVector::from_spec(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub steps: usize,
    /// Central-difference step in log-parameter space.
    pub fd_step: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            learning_rate: 0.3,
            steps: 70,
            fd_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Best parameters seen.
    pub theta: ThetaVector,
    pub best_value: f64,
    /// Objective at the starting point and after each accepted step.
    pub trace: Vec<f64>,
    /// Running minimum of `trace`.
    pub best_trace: Vec<f64>,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub fd_step: f64,
}

fn eval_finite(obj: &dyn Objective, theta: &ThetaVector) -> Option<f64> {
    obj.evaluate(theta).ok().filter(|v| v.is_finite())
}

fn shifted(theta: &ThetaVector, i: usize, h: f64) -> ThetaVector {
    let mut t = theta.clone();
    t.log_values[i] += h;
    t
}

/// Central-difference gradient over the free coordinates (fixed ones get 0).
///
/// `fourth_order` selects the five-point stencil. Returns `None` if any evaluation fails.
pub fn fd_gradient(obj: &dyn Objective, theta: &ThetaVector, h: f64, fourth_order: bool) -> Option<Vec<f64>> {
    let mut g = vec![0.0; theta.len()];
    for i in theta.free_indices() {
        let fp = eval_finite(obj, &shifted(theta, i, h))?;
        let fm = eval_finite(obj, &shifted(theta, i, -h))?;
        g[i] = if fourth_order {
            let fp2 = eval_finite(obj, &shifted(theta, i, 2.0 * h))?;
            let fm2 = eval_finite(obj, &shifted(theta, i, -2.0 * h))?;
            (-fp2 + 8.0 * fp - 8.0 * fm + fm2) / (12.0 * h)
        } else {
            (fp - fm) / (2.0 * h)
        };
    }
    Some(g)
}

/// Adam in log-parameter space.
///
/// A non-finite objective or gradient rejects the step and halves the finite-difference
/// step; a second occurrence aborts with the partial trace.
pub fn optimize(obj: &dyn Objective, theta0: &ThetaVector, settings: &OptimizerSettings) -> Result<FitResult> {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let f0 = eval_finite(obj, theta0).ok_or(Error::InvalidStart)?;
    let mut theta = theta0.clone();
    let mut best = (theta.clone(), f0);
    let mut trace = vec![f0];
    let mut best_trace = vec![f0];
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut h = settings.fd_step;
    let mut rejected = 0;
    let mut t = 0;

    for it in 0..settings.steps {
        let candidate = fd_gradient(obj, &theta, h, false).and_then(|g| {
            t += 1;
            let mut next = theta.clone();
            let (mut m2, mut v2) = (m.clone(), v.clone());
            for i in theta.free_indices() {
                m2[i] = b1 * m2[i] + (1.0 - b1) * g[i];
                v2[i] = b2 * v2[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m2[i] / (1.0 - f64::powi(b1, t));
                let vh = v2[i] / (1.0 - f64::powi(b2, t));
                next.log_values[i] -= settings.learning_rate * mh / (vh.sqrt() + eps);
            }
            eval_finite(obj, &next).map(|f| (next, f, m2, v2))
        });
        match candidate {
            Some((next, f, m2, v2)) => {
                theta = next;
                m = m2;
                v = v2;
                trace.push(f);
                if f < best.1 {
                    best = (theta.clone(), f);
                }
                best_trace.push(best.1);
            }
            None => {
                rejected += 1;
                if rejected > 1 {
                    return Err(Error::OptimizationAborted {
                        iterations: it,
                        reason: "objective or gradient not finite twice".into(),
                        partial_trace: trace,
                        best_log_theta: best.0.log_values,
                    });
                }
                h *= 0.5;
            }
        }
    }
    Ok(FitResult {
        theta: best.0,
        best_value: best.1,
        trace,
        best_trace,
        iterations: settings.steps,
        rejected_steps: rejected,
        fd_step: h,
    })
}

/// Optimizer result together with the filter trace at the best parameters.
pub struct Fit {
    pub result: FitResult,
    pub spec: KernelSpec,
    pub trace: FilterTrace,
    pub evaluations: usize,
}

pub fn fit(objective: &FilterObjective<'_>, theta0: &ThetaVector, settings: &OptimizerSettings) -> Result<Fit> {
    let result = optimize(objective, theta0, settings)?;
    let spec = result.theta.apply(&objective.template);
    let trace = objective.trace(&result.theta)?;
    Ok(Fit {
        result,
        spec,
        trace,
        evaluations: objective.evaluations(),
    })
}

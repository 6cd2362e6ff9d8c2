//! Kernel specifications and their state-space (SDE) representation.
//!
//! A separable kernel `κ_s(s - s') κ_t(t - t')` is turned into a linear SDE whose
//! state stacks `f` and its first `ν` time derivatives at every grid location:
//! `F = I ⊗ F_t`, `L = I ⊗ L_t`, `Q_c = K_s ⊗ Q_{c,t}`.
//!
//! Temporal families are keyed by state dimension and `λ` formula: the two-state
//! model with `λ = √3/ℓ` is Matérn-3/2 and the three-state model with `λ = √5/ℓ`
//! is Matérn-5/2.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_exponential, psd_clamp, solve_lyapunov};

/// Initial variance scale for the Wiener process, relative to `σ_κ²`.
pub const WIENER_INITIAL_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalFamily {
    Wiener,
    /// Ornstein-Uhlenbeck, identical to Matérn-1/2.
    Exponential,
    Matern32,
    Matern52,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialFamily {
    SquaredExponential,
    Matern32,
}

impl FromStr for TemporalFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "wiener" => Ok(TemporalFamily::Wiener),
            "exponential" | "exp" | "matern12" | "matern-1/2" | "ou" => Ok(TemporalFamily::Exponential),
            "matern32" | "matern-3/2" | "matern-32" => Ok(TemporalFamily::Matern32),
            "matern52" | "matern-5/2" | "matern-52" => Ok(TemporalFamily::Matern52),
            "periodic" => Err(Error::UnsupportedKernel(
                "periodic temporal kernel has no state-space form here".into(),
            )),
            other => Err(Error::UnsupportedKernel(format!("unknown temporal kernel '{other}'"))),
        }
    }
}

impl FromStr for SpatialFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "se" | "squared-exponential" | "rbf" => Ok(SpatialFamily::SquaredExponential),
            "matern32" | "matern-3/2" | "matern-32" => Ok(SpatialFamily::Matern32),
            other => Err(Error::UnsupportedKernel(format!("unknown spatial kernel '{other}'"))),
        }
    }
}

impl fmt::Display for TemporalFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TemporalFamily::Wiener => "wiener",
            TemporalFamily::Exponential => "exponential",
            TemporalFamily::Matern32 => "matern32",
            TemporalFamily::Matern52 => "matern52",
        };
        f.write_str(s)
    }
}

impl fmt::Display for SpatialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpatialFamily::SquaredExponential => "se",
            SpatialFamily::Matern32 => "matern32",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalKernel {
    pub family: TemporalFamily,
    /// Ignored by the Wiener process.
    pub lengthscale: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialKernel {
    pub family: SpatialFamily,
    pub lengthscale: f64,
    pub amplitude: f64,
}

/// Separable spatio-temporal kernel plus Gaussian noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub temporal: TemporalKernel,
    /// `None` means a purely temporal model with a single site.
    pub spatial: Option<SpatialKernel>,
    pub noise_variance: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl TemporalKernel {
    pub fn new(family: TemporalFamily, lengthscale: f64, amplitude: f64) -> Self {
        TemporalKernel {
            family,
            lengthscale,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family != TemporalFamily::Wiener {
            positive("temporal lengthscale", self.lengthscale)?;
        }
        positive("temporal amplitude", self.amplitude)
    }

    /// Closed-form stationary covariance at lag `tau`. Not defined for the Wiener process.
    pub fn stationary_cov(&self, tau: f64) -> Option<f64> {
        let s2 = self.amplitude * self.amplitude;
        let r = tau.abs();
        let ell = self.lengthscale;
        match self.family {
            TemporalFamily::Wiener => None,
            TemporalFamily::Exponential => Some(s2 * (-r / ell).exp()),
            TemporalFamily::Matern32 => {
                let x = 3f64.sqrt() * r / ell;
                Some(s2 * (1.0 + x) * (-x).exp())
            }
            TemporalFamily::Matern52 => {
                let x = 5f64.sqrt() * r / ell;
                Some(s2 * (1.0 + x + x * x / 3.0) * (-x).exp())
            }
        }
    }

    /// Prior covariance of `f(t)` and `f(t')` under the model's start-time convention.
    ///
    /// For the Wiener process the state starts at `origin` with variance
    /// `WIENER_INITIAL_SCALE * σ_κ²`.
    pub fn cov(&self, t: f64, t2: f64, origin: f64) -> f64 {
        match self.stationary_cov(t - t2) {
            Some(v) => v,
            None => {
                let s2 = self.amplitude * self.amplitude;
                WIENER_INITIAL_SCALE * s2 + s2 * (t.min(t2) - origin).max(0.0)
            }
        }
    }
}

impl SpatialKernel {
    pub fn new(family: SpatialFamily, lengthscale: f64, amplitude: f64) -> Self {
        SpatialKernel {
            family,
            lengthscale,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("spatial lengthscale", self.lengthscale)?;
        positive("spatial amplitude", self.amplitude)
    }

    pub fn cov_at_distance(&self, r: f64) -> f64 {
        let s2 = self.amplitude * self.amplitude;
        match self.family {
            SpatialFamily::SquaredExponential => {
                s2 * (-0.5 * r * r / (self.lengthscale * self.lengthscale)).exp()
            }
            SpatialFamily::Matern32 => {
                let x = 3f64.sqrt() * r / self.lengthscale;
                s2 * (1.0 + x) * (-x).exp()
            }
        }
    }
}

impl KernelSpec {
    pub fn temporal_only(temporal: TemporalKernel, noise_variance: f64) -> Self {
        KernelSpec {
            temporal,
            spatial: None,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.temporal.validate()?;
        if let Some(sp) = &self.spatial {
            sp.validate()?;
        }
        positive("noise variance", self.noise_variance)
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_variance.sqrt()
    }

    /// Spatial covariance between two locations (1 when the model is purely temporal).
    pub fn spatial_cov(&self, s: &[f64], s2: &[f64]) -> f64 {
        match &self.spatial {
            None => 1.0,
            Some(k) => k.cov_at_distance(euclidean(s, s2)),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Temporal SDE matrices for a single site.
#[derive(Debug, Clone)]
pub struct SdeBlocks {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub qc: f64,
    pub nu: usize,
    /// Steady-state covariance; `None` for the non-stationary Wiener process.
    pub sigma_inf: Option<DMatrix<f64>>,
}

impl SdeBlocks {
    pub fn block_dim(&self) -> usize {
        self.nu + 1
    }

    /// `L Q_c Lᵀ`.
    pub fn diffusion(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose() * self.qc
    }
}

pub fn sde_blocks(kernel: &TemporalKernel) -> Result<SdeBlocks> {
    kernel.validate()?;
    let s2 = kernel.amplitude * kernel.amplitude;
    let ell = kernel.lengthscale;
    let (f, l, qc, nu) = match kernel.family {
        TemporalFamily::Wiener => (DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0), s2, 0),
        TemporalFamily::Exponential => (
            DMatrix::from_element(1, 1, -1.0 / ell),
            DMatrix::from_element(1, 1, 1.0),
            2.0 * s2 / ell,
            0,
        ),
        TemporalFamily::Matern32 => {
            let lam = 3f64.sqrt() / ell;
            (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lam * lam, -2.0 * lam]),
                DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
                4.0 * lam.powi(3) * s2,
                1,
            )
        }
        TemporalFamily::Matern52 => {
            let lam = 5f64.sqrt() / ell;
            (
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -lam.powi(3), -3.0 * lam * lam, -3.0 * lam],
                ),
                DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
                16.0 * s2 * lam.powi(5) / 3.0,
                2,
            )
        }
    };
    let sigma_inf = if kernel.family == TemporalFamily::Wiener {
        None
    } else {
        Some(solve_lyapunov(&f, &(&l * l.transpose() * qc))?)
    };
    Ok(SdeBlocks {
        f,
        l,
        qc,
        nu,
        sigma_inf,
    })
}

/// Builds `K_s` over the rows of `grid` (an `n_s × d_s` matrix).
pub fn spatial_kernel_matrix(spec: &KernelSpec, grid: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = grid.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("spatial grid is empty".into()));
    }
    if spec.spatial.is_none() && n != 1 {
        return Err(Error::InvalidInput(format!(
            "purely temporal kernel requires a single site, grid has {n}"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| grid.row(i).iter().copied().collect()).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if rows[i] == rows[j] {
                return Err(Error::DegenerateGrid(i, j));
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| spec.spatial_cov(&rows[i], &rows[j])))
}

/// Discrete-time transition between two timestamps.
///
/// `A = I_{n_s} ⊗ A_t` is stored through its temporal block only.
#[derive(Debug, Clone)]
pub struct Transition {
    pub a_block: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub dt: f64,
    n_s: usize,
}

impl Transition {
    pub fn n_s(&self) -> usize {
        self.n_s
    }

    /// Dense `A`.
    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.n_s, self.n_s).kronecker(&self.a_block)
    }

    /// `A M`, exploiting the block-diagonal structure.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.a_block.nrows();
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..self.n_s {
            let prod = &self.a_block * m.rows(i * b, b);
            out.rows_mut(i * b, b).copy_from(&prod);
        }
        out
    }

    pub fn apply_mean(&self, mean: &DVector<f64>) -> DVector<f64> {
        let b = self.a_block.nrows();
        let mut out = DVector::zeros(mean.len());
        for i in 0..self.n_s {
            let prod = &self.a_block * mean.rows(i * b, b);
            out.rows_mut(i * b, b).copy_from(&prod);
        }
        out
    }

    /// `A P Aᵀ`.
    pub fn propagate(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let ap = self.left_mul(cov);
        self.left_mul(&ap.transpose()).transpose()
    }
}

/// Assembled spatio-temporal state-space model.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub spec: KernelSpec,
    pub blocks: SdeBlocks,
    pub grid: DMatrix<f64>,
    pub k_s: DMatrix<f64>,
    /// `n_s × state_dim` selector of the function value at each site.
    pub h: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
    /// `Σ_{t,0}`: the per-site temporal block of `sigma0`.
    sigma0_t: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn assemble(spec: &KernelSpec, grid: &DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        let blocks = sde_blocks(&spec.temporal)?;
        let k_s = spatial_kernel_matrix(spec, grid)?;
        let n_s = grid.nrows();
        let b = blocks.block_dim();
        let sigma0_t = match &blocks.sigma_inf {
            Some(s) => s.clone(),
            None => {
                let s2 = spec.temporal.amplitude * spec.temporal.amplitude;
                DMatrix::<f64>::identity(b, b) * (WIENER_INITIAL_SCALE * s2)
            }
        };
        let sigma0 = k_s.kronecker(&sigma0_t);
        let mut h = DMatrix::zeros(n_s, n_s * b);
        for j in 0..n_s {
            h[(j, j * b)] = 1.0;
        }
        Ok(StateSpaceModel {
            spec: *spec,
            blocks,
            grid: grid.clone(),
            k_s,
            h,
            sigma0,
            sigma0_t,
        })
    }

    pub fn n_s(&self) -> usize {
        self.grid.nrows()
    }

    pub fn block_dim(&self) -> usize {
        self.blocks.block_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.n_s() * self.block_dim()
    }

    /// State index holding `f` at site `j`.
    pub fn obs_index(&self, j: usize) -> usize {
        j * self.block_dim()
    }

    pub fn noise_variance(&self) -> f64 {
        self.spec.noise_variance
    }

    pub fn f(&self) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.n_s(), self.n_s()).kronecker(&self.blocks.f)
    }

    pub fn l(&self) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.n_s(), self.n_s()).kronecker(&self.blocks.l)
    }

    pub fn qc(&self) -> DMatrix<f64> {
        self.k_s.clone() * self.blocks.qc
    }

    /// Exact discretization over a step of length `dt`.
    pub fn discretize(&self, dt: f64) -> Result<Transition> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let a_t = matrix_exponential(&self.blocks.f, dt)?;
        let sigma_t = match &self.blocks.sigma_inf {
            Some(sinf) => {
                let raw = sinf - &a_t * sinf * a_t.transpose();
                let tol = 1e-8 * raw.trace().abs() + 1e-12 * sinf.trace();
                psd_clamp(&raw, tol)?
            }
            None => van_loan_covariance(&self.blocks.f, &self.blocks.diffusion(), dt)?,
        };
        Ok(Transition {
            a_block: a_t,
            sigma: self.k_s.kronecker(&sigma_t),
            dt,
            n_s: self.n_s(),
        })
    }

    /// Temporal block of the initial covariance.
    pub fn sigma0_temporal(&self) -> &DMatrix<f64> {
        &self.sigma0_t
    }
}

/// `∫_0^dt e^{Fτ} Q e^{Fᵀτ} dτ` via the Van Loan block exponential.
fn van_loan_covariance(f: &DMatrix<f64>, q: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-f));
    m.view_mut((0, n), (n, n)).copy_from(q);
    m.view_mut((n, n), (n, n)).copy_from(&f.transpose());
    let e = matrix_exponential(&m, dt)?;
    let e12 = e.view((0, n), (n, n)).into_owned();
    let e22 = e.view((n, n), (n, n)).into_owned();
    let raw = e22.transpose() * e12;
    let tol = 1e-8 * raw.trace().abs();
    psd_clamp(&raw, tol)
}

/// Memoizes transitions by the exact bit pattern of `dt`.
pub struct TransitionCache<'a> {
    model: &'a StateSpaceModel,
    cache: HashMap<u64, Arc<Transition>>,
}

impl<'a> TransitionCache<'a> {
    pub fn new(model: &'a StateSpaceModel) -> Self {
        TransitionCache {
            model,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, dt: f64) -> Result<Arc<Transition>> {
        if let Some(t) = self.cache.get(&dt.to_bits()) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(self.model.discretize(dt)?);
        self.cache.insert(dt.to_bits(), Arc::clone(&t));
        Ok(t)
    }
}

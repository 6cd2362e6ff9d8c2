//! JSON run configuration and its merge with command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strcgp::data_io::{attach_truth, load_csv, Dataset};
use strcgp::hyperopt::{ObjectiveKind, OptimizerSettings, Param};
use strcgp::ssm::{KernelSpec, SpatialFamily, SpatialKernel, TemporalFamily, TemporalKernel};
use strcgp::weights::{quantile, FixedField, SummaryMode, WeightPolicy, DEFAULT_ALPHA, DEFAULT_DELTA};

use crate::args::{FitArgs, Method, ModelArgs, ObjectiveChoice, SummaryChoice};
use crate::error::{usage, CliError, CliResult};

/// Normal-consistency factor for the median absolute deviation.
const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: Option<f64>,
    pub steps: Option<usize>,
    pub fd_step: Option<f64>,
}

/// Everything a command can take from `--config`. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must name the command being run.
    pub command: Option<String>,
    pub method: Option<Method>,
    pub kernel: Option<KernelSpec>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub shrinkage: Option<f64>,
    pub objective: Option<ObjectiveChoice>,
    pub optimizer: Option<OptimizerConfig>,
    pub summary: Option<SummaryChoice>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub fix: Vec<Param>,
    #[serde(default)]
    pub free: Vec<Param>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

impl RunConfig {
    pub fn load(path: Option<&Path>, command: &str) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let cfg: RunConfig = read_json(path)?;
        if let Some(c) = &cfg.command {
            if c != command {
                return usage(format!("{}: config is for '{c}', not '{command}'", path.display()));
            }
        }
        Ok(cfg)
    }
}

/// Kernel stored in a `--params` file: either a fit result or a bare kernel.
fn params_kernel(path: &Path) -> CliResult<KernelSpec> {
    let value: serde_json::Value = read_json(path)?;
    let kernel = value.get("kernel").cloned().unwrap_or(value);
    serde_json::from_value(kernel).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: &Path, truth: Option<&Path>) -> CliResult<Dataset> {
    let data_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| CliError::Data { path: p, source }
    };
    let mut ds = load_csv(path).map_err(data_err(path))?;
    if let Some(t) = truth {
        let file = std::fs::File::open(t).map_err(|source| CliError::File {
            path: t.to_path_buf(),
            source,
        })?;
        attach_truth(&mut ds, file).map_err(data_err(t))?;
    }
    Ok(ds)
}

pub fn data_path(flag: Option<&PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    match flag.or(cfg.data.as_ref()) {
        Some(p) => Ok(p.clone()),
        None => usage("no data file given (positional argument or \"data\" in --config)"),
    }
}

/// A fully resolved model: kernel, method and weight policy.
#[derive(Debug, Clone)]
pub struct Model {
    pub method: Method,
    pub spec: KernelSpec,
    pub policy: WeightPolicy,
    /// True if the noise variance came from a flag, the config or a params file.
    pub noise_given: bool,
}

fn observed(ds: &Dataset) -> Vec<f64> {
    ds.y.iter().copied().filter(|v| v.is_finite()).collect()
}

/// Median and scaled MAD of the observations.
fn robust_location_scale(ds: &Dataset) -> CliResult<(f64, f64)> {
    let y = observed(ds);
    if y.is_empty() {
        return usage("data file has no observed values");
    }
    let med = quantile(&y, 0.5);
    let dev: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    Ok((med, MAD_SCALE * quantile(&dev, 0.5)))
}

fn check_positive(flag: &str, v: Option<f64>) -> CliResult<()> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => usage(format!("{flag} must be finite and > 0, got {x}")),
        _ => Ok(()),
    }
}

impl Model {
    /// Merges defaults, the config kernel, the params file and flags, in that order.
    ///
    /// `ds` decides whether a spatial kernel is needed and supplies the default IMQ centre
    /// and shrinkage for `rcgp-fixed`.
    pub fn resolve(args: &ModelArgs, cfg: &RunConfig, ds: Option<&Dataset>) -> CliResult<Model> {
        for (flag, v) in [
            ("--lengthscale", args.lengthscale),
            ("--amplitude", args.amplitude),
            ("--spatial-lengthscale", args.spatial_lengthscale),
            ("--spatial-amplitude", args.spatial_amplitude),
            ("--noise-variance", args.noise_variance),
            ("--shrinkage", args.shrinkage),
        ] {
            check_positive(flag, v)?;
        }
        let method = args.method.or(cfg.method).unwrap_or(Method::StRcgp);
        let from_params = args.params.as_deref().map(params_kernel).transpose()?;
        let base = from_params.or(cfg.kernel);
        let noise_given = base.is_some() || args.noise_variance.is_some();

        let spatial_data = ds.is_some_and(|d| d.grid.ncols() > 0);
        let mut spec = base.unwrap_or_else(|| KernelSpec {
            temporal: TemporalKernel::new(TemporalFamily::Matern32, 1.0, 1.0),
            spatial: spatial_data.then(|| SpatialKernel::new(SpatialFamily::SquaredExponential, 1.0, 1.0)),
            noise_variance: 1.0,
        });
        if let Some(f) = args.kernel {
            spec.temporal.family = f;
        }
        if let Some(v) = args.lengthscale {
            spec.temporal.lengthscale = v;
        }
        if let Some(v) = args.amplitude {
            spec.temporal.amplitude = v;
        }
        if args.spatial_kernel.is_some() || args.spatial_lengthscale.is_some() || args.spatial_amplitude.is_some() {
            let sp = spec
                .spatial
                .get_or_insert(SpatialKernel::new(SpatialFamily::SquaredExponential, 1.0, 1.0));
            if let Some(f) = args.spatial_kernel {
                sp.family = f;
            }
            if let Some(v) = args.spatial_lengthscale {
                sp.lengthscale = v;
            }
            if let Some(v) = args.spatial_amplitude {
                sp.amplitude = v;
            }
        }
        if let Some(v) = args.noise_variance {
            spec.noise_variance = v;
        }
        spec.validate()?;

        let alpha = args.alpha.or(cfg.alpha);
        let gamma = args.gamma.or(cfg.gamma);
        let shrinkage = args.shrinkage.or(cfg.shrinkage);
        check_positive("shrinkage", shrinkage)?;
        if method != Method::RcgpFixed && (gamma.is_some() || shrinkage.is_some()) {
            return usage("--gamma and --shrinkage only apply to --method rcgp-fixed");
        }
        if method == Method::Stgp && alpha.is_some() {
            return usage("--alpha does not apply to --method stgp");
        }
        let alpha = alpha.unwrap_or(DEFAULT_ALPHA);
        let policy = match method {
            Method::Stgp => WeightPolicy::constant(),
            Method::StRcgp => WeightPolicy::AdaptiveImq { alpha, beta: None },
            Method::RcgpFixed => {
                let (gamma, c) = match (gamma, shrinkage) {
                    (Some(g), Some(c)) => (g, c),
                    _ => {
                        let ds = ds.ok_or_else(|| {
                            CliError::Usage("rcgp-fixed needs --gamma and --shrinkage here".into())
                        })?;
                        let (med, mad) = robust_location_scale(ds)?;
                        (gamma.unwrap_or(med), shrinkage.unwrap_or(mad.max(f64::EPSILON)))
                    }
                };
                WeightPolicy::FixedImq {
                    gamma: FixedField::Constant(gamma),
                    c: FixedField::Constant(c),
                    alpha,
                    beta: None,
                }
            }
        };
        policy.validate()?;
        Ok(Model {
            method,
            spec,
            policy,
            noise_given,
        })
    }
}

/// Objective and optimizer settings for `fit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitPlan {
    pub objective: ObjectiveKind,
    pub settings: OptimizerSettings,
}

impl FitPlan {
    pub fn resolve(args: &FitArgs, cfg: &RunConfig, method: Method) -> CliResult<FitPlan> {
        let choice = args.objective.or(cfg.objective).unwrap_or(ObjectiveChoice::Standard);
        if choice == ObjectiveChoice::Robust && method == Method::Stgp {
            return usage("--objective robust needs a robust method (st-rcgp or rcgp-fixed)");
        }
        let summary = args.summary.or(cfg.summary);
        let delta = args.delta.or(cfg.delta);
        if delta.is_some() && summary.is_some_and(|s| s != SummaryChoice::Quantile) {
            return usage("--delta only applies to --summary quantile");
        }
        let objective = match choice {
            ObjectiveChoice::Standard => {
                if summary.is_some() || delta.is_some() {
                    return usage("--summary and --delta only apply to --objective robust");
                }
                ObjectiveKind::Standard
            }
            ObjectiveChoice::Robust => ObjectiveKind::Robust {
                summary: match summary.unwrap_or(SummaryChoice::Quantile) {
                    SummaryChoice::Quantile => SummaryMode::Quantile {
                        delta: delta.unwrap_or(DEFAULT_DELTA),
                    },
                    SummaryChoice::Mean => SummaryMode::Mean,
                    SummaryChoice::Min => SummaryMode::Min,
                },
            },
        };
        let opt = cfg.optimizer.clone().unwrap_or_default();
        let d = OptimizerSettings::default();
        let settings = OptimizerSettings {
            learning_rate: args.lr.or(opt.learning_rate).unwrap_or(d.learning_rate),
            steps: args.steps.or(opt.steps).unwrap_or(d.steps),
            fd_step: args.fd_step.or(opt.fd_step).unwrap_or(d.fd_step),
        };
        check_positive("--lr", Some(settings.learning_rate))?;
        check_positive("--fd-step", Some(settings.fd_step))?;
        Ok(FitPlan { objective, settings })
    }
}

use std::collections::BTreeMap;

use serde_json::{json, Value};
use strcgp::data_io::Dataset;
use strcgp::hyperopt::{fit, report_from_trace, FilterObjective, ThetaVector};
use strcgp::ssm::KernelSpec;
use strcgp::Error;

use crate::args::{FitArgs, SourceChoice};
use crate::config::{data_path, load_dataset, FitPlan, Model, RunConfig};
use crate::error::{usage, CliResult};
use crate::output::{emit_json, matrix_rows, Posterior, SCHEMA_VERSION};

fn theta_map(theta: &ThetaVector) -> BTreeMap<&'static str, f64> {
    theta
        .params
        .iter()
        .zip(&theta.log_values)
        .map(|(p, lv)| (p.name(), lv.exp()))
        .collect()
}

/// Posterior summaries at the fitted kernel: weights, summary weights and metrics.
///
/// Metrics score against the clean observations when a truth file is attached.
pub fn evaluation(model: &Model, spec: KernelSpec, ds: &Dataset, plan: &FitPlan) -> CliResult<Value> {
    let fitted = Model { spec, ..model.clone() };
    let post = Posterior::compute(&fitted, &ds.grid, &ds.times, &ds.y, SourceChoice::Smoothed)?;
    let (target, name) = match &ds.y_clean {
        Some(yc) => (yc, "y_clean"),
        None => (&ds.y, "y"),
    };
    let metrics = post.metrics(target, spec.noise_variance)?;
    let summary = report_from_trace(&post.trace, plan.objective)?.summary_weights;
    Ok(json!({
        "weights": matrix_rows(&post.weights()),
        "summary_weights": summary,
        "metrics": metrics,
        "metrics_target": name,
    }))
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.model.config.as_deref(), "fit")?;
    let data = data_path(args.data.as_ref(), &cfg)?;
    let truth = args.truth.clone().or(cfg.truth.clone());
    let ds = load_dataset(&data, truth.as_deref())?;
    let model = Model::resolve(&args.model, &cfg, Some(&ds))?;
    let plan = FitPlan::resolve(&args, &cfg, model.method)?;

    let mut theta0 = ThetaVector::from_spec(&model.spec);
    let toggles = (cfg.free.iter().chain(&args.free).map(|p| (*p, false)))
        .chain(cfg.fix.iter().chain(&args.fix).map(|p| (*p, true)));
    for (p, fixed) in toggles {
        if theta0.index(p).is_none() {
            return usage(format!("parameter '{}' is not part of this kernel", p.name()));
        }
        theta0.set_fixed(p, fixed);
    }

    let objective = FilterObjective::new(model.spec, &ds.grid, &ds.times, &ds.y, model.policy.clone(), plan.objective);
    let output = args.output.clone().or(cfg.output.clone());
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "method": model.method.name(),
        "objective": plan.objective,
        "policy": model.policy,
        "data": {
            "path": data.display().to_string(),
            "truth": truth.as_ref().map(|p| p.display().to_string()),
            "n_t": ds.n_t(),
            "n_s": ds.n_s(),
            "d_s": ds.grid.ncols(),
        },
    });
    let fixed = |theta: &ThetaVector| -> Vec<&'static str> {
        theta.params.iter().zip(&theta.fixed).filter(|(_, f)| **f).map(|(p, _)| p.name()).collect()
    };

    match fit(&objective, &theta0, &plan.settings) {
        Ok(f) => {
            extend(&mut doc, json!({
                "status": "ok",
                "kernel": f.spec,
                "theta": theta_map(&f.result.theta),
                "fixed": fixed(&f.result.theta),
                "optimizer": {
                    "settings": plan.settings,
                    "iterations": f.result.iterations,
                    "rejected_steps": f.result.rejected_steps,
                    "evaluations": f.evaluations,
                    "best_value": f.result.best_value,
                },
                "trace": { "objective": f.result.trace, "best": f.result.best_trace },
            }));
            extend(&mut doc, evaluation(&model, f.spec, &ds, &plan)?);
            emit_json(output.as_deref(), &doc)
        }
        Err(Error::OptimizationAborted {
            iterations,
            reason,
            partial_trace,
            best_log_theta,
        }) => {
            let theta = ThetaVector {
                log_values: best_log_theta.clone(),
                ..theta0.clone()
            };
            let spec = theta.apply(&model.spec);
            extend(&mut doc, json!({
                "status": "aborted",
                "reason": reason,
                "kernel": spec,
                "theta": theta_map(&theta),
                "fixed": fixed(&theta),
                "optimizer": { "settings": plan.settings, "iterations": iterations },
                "trace": { "objective": partial_trace },
            }));
            if let Ok(extra) = evaluation(&model, spec, &ds, &plan) {
                extend(&mut doc, extra);
            }
            emit_json(output.as_deref(), &doc)?;
            Err(Error::OptimizationAborted {
                iterations,
                reason,
                partial_trace,
                best_log_theta,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn extend(doc: &mut Value, more: Value) {
    if let (Value::Object(a), Value::Object(b)) = (doc, more) {
        a.extend(b);
    }
}

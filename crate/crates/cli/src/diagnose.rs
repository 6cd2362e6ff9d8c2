use serde_json::json;
use strcgp::data_io::Dataset;
use strcgp::diagnostics::pif_curve;

use crate::args::{DiagnoseArgs, SourceChoice};
use crate::config::{data_path, load_dataset, Model, RunConfig};
use crate::error::{usage, CliResult};
use crate::output::{csv_bytes, emit, emit_json, fmt_float, Posterior, SCHEMA_VERSION};
use crate::predict::{read_predictions, row_metrics};

/// `{0, 1, 10, ..., 10⁶}` in units of the noise standard deviation.
pub fn default_magnitudes() -> Vec<f64> {
    std::iter::once(0.0).chain((0..=6).map(|e| 10f64.powi(e))).collect()
}

/// First observed, uncontaminated time index at or after the midpoint.
pub fn default_site_t(ds: &Dataset, j: usize) -> Option<usize> {
    let clean = |k: usize| ds.outliers.as_ref().is_none_or(|o| !o[(k, j)]);
    (ds.n_t() / 2..ds.n_t()).find(|&k| ds.y[(k, j)].is_finite() && clean(k))
}

pub fn run(args: DiagnoseArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.model.config.as_deref(), "diagnose")?;
    if let Some(pred) = &args.predictions {
        let model = Model::resolve(&args.model, &cfg, None)?;
        if !model.noise_given {
            return usage("scoring --predictions needs the noise variance (--params, --config or --noise-variance)");
        }
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "diagnose",
            "predictions": pred.display().to_string(),
            "metrics": row_metrics(&read_predictions(pred)?, model.spec.noise_variance)?,
        });
        return emit_json(args.report.as_deref(), &doc);
    }

    let data = data_path(args.data.as_ref(), &cfg)?;
    let truth = args.truth.clone().or(cfg.truth.clone());
    let ds = load_dataset(&data, truth.as_deref())?;
    let model = Model::resolve(&args.model, &cfg, Some(&ds))?;
    let j = args.site_s;
    if j >= ds.n_s() {
        return usage(format!("--site-s {j} is out of range (n_s = {})", ds.n_s()));
    }
    let k = match args.site_t {
        Some(k) => k,
        None => match default_site_t(&ds, j) {
            Some(k) => k,
            None => return usage("no observed point in the second half of the data; pass --site-t"),
        },
    };
    let sigma = model.spec.noise_sd();
    let multiples = args.magnitudes.clone().unwrap_or_else(default_magnitudes);
    let mags: Vec<f64> = multiples.iter().map(|m| m * sigma).collect();
    let curve = pif_curve(&model.spec, &ds.grid, &ds.times, &ds.y, &model.policy, (k, j), &mags)?;
    let csv = csv_bytes(
        &["magnitude".into(), "pif".into()],
        curve.magnitudes.iter().zip(&curve.values).map(|(m, v)| vec![fmt_float(*m), fmt_float(*v)]),
    );
    emit(args.output.as_deref(), &csv)?;

    if let Some(report) = &args.report {
        let post = Posterior::compute(&model, &ds.grid, &ds.times, &ds.y, SourceChoice::Smoothed)?;
        let (target, name) = match &ds.y_clean {
            Some(yc) => (yc, "y_clean"),
            None => (&ds.y, "y"),
        };
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "diagnose",
            "method": model.method.name(),
            "kernel": model.spec,
            "site": { "t_index": k, "s_index": j, "t": ds.times[k], "s": ds.grid.row(j).iter().collect::<Vec<_>>() },
            "pif": {
                "magnitudes": curve.magnitudes,
                "sigma_multiples": multiples,
                "values": curve.values,
                "plateau": curve.plateaus(args.plateau_tol),
                "plateau_tol": args.plateau_tol,
            },
            "metrics": post.metrics(target, model.spec.noise_variance)?,
            "metrics_target": name,
        });
        emit_json(Some(report), &doc)?;
    }
    Ok(())
}

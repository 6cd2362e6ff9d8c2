use std::path::Path;

use serde_json::json;
use strcgp::diagnostics::MetricReport;
use strcgp::filtering::{predict_at, QueryPoint, Source};

use crate::args::{PredictArgs, SourceChoice};
use crate::config::{data_path, load_dataset, Model, RunConfig};
use crate::error::{usage, CliError, CliResult};
use crate::output::{csv_bytes, emit, emit_json, fmt_float, parse_float, spatial_header, Posterior, SCHEMA_VERSION};

/// One line of the predictions CSV. `y` and `weight` are NaN at query points.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub t: f64,
    pub s: Vec<f64>,
    pub y: f64,
    pub mean: f64,
    pub sd: f64,
    pub sd_obs: f64,
    pub weight: f64,
}

const TAIL: [&str; 5] = ["y", "mean", "sd", "sd_obs", "weight"];

pub fn header(d_s: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(spatial_header(d_s));
    h.extend(TAIL.map(String::from));
    h
}

pub fn to_csv(d_s: usize, rows: &[PredictionRow]) -> Vec<u8> {
    csv_bytes(
        &header(d_s),
        rows.iter().map(|r| {
            let mut rec = vec![fmt_float(r.t)];
            rec.extend(r.s.iter().map(|v| fmt_float(*v)));
            rec.extend([r.y, r.mean, r.sd, r.sd_obs, r.weight].map(fmt_float));
            rec
        }),
    )
}

pub fn read_predictions(path: &Path) -> CliResult<Vec<PredictionRow>> {
    let file = std::fs::File::open(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let in_file = |e: strcgp::Error| CliError::Data {
        path: path.to_path_buf(),
        source: e,
    };
    let parse_err = |line: u64, message: String| in_file(strcgp::Error::Parse { line, message });
    let mut rdr = csv::Reader::from_reader(file);
    let head: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let d_s = head.len().saturating_sub(1 + TAIL.len());
    if head != header(d_s) {
        return Err(parse_err(1, format!("expected header {}, got {}", header(d_s).join(","), head.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let v = rec
            .iter()
            .map(|f| parse_float(f, line))
            .collect::<CliResult<Vec<f64>>>()
            .map_err(|e| match e {
                CliError::Core(c) => in_file(c),
                other => other,
            })?;
        rows.push(PredictionRow {
            t: v[0],
            s: v[1..=d_s].to_vec(),
            y: v[d_s + 1],
            mean: v[d_s + 2],
            sd: v[d_s + 3],
            sd_obs: v[d_s + 4],
            weight: v[d_s + 5],
        });
    }
    Ok(rows)
}

/// Metrics over the rows that carry an observation.
pub fn row_metrics(rows: &[PredictionRow], noise_variance: f64) -> CliResult<MetricReport> {
    let obs: Vec<&PredictionRow> = rows.iter().filter(|r| r.y.is_finite()).collect();
    let col = |f: fn(&PredictionRow) -> f64| obs.iter().map(|r| f(r)).collect::<Vec<f64>>();
    Ok(MetricReport::compute(
        &col(|r| r.y),
        &col(|r| r.mean),
        &col(|r| r.sd_obs),
        &col(|r| r.weight),
        noise_variance.sqrt(),
    )?)
}

fn read_queries(path: &Path) -> CliResult<Vec<QueryPoint>> {
    let bytes = std::fs::read(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let in_file = |line: u64, message: String| CliError::Data {
        path: path.to_path_buf(),
        source: strcgp::Error::Parse { line, message },
    };
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let head: Vec<String> = rdr
        .headers()
        .map_err(|e| in_file(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut expected = vec!["t".to_string()];
    expected.extend(spatial_header(head.len().saturating_sub(1)));
    if head != expected {
        return Err(in_file(1, format!("expected header t,s1.., got {}", head.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| in_file(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = Vec::with_capacity(rec.len());
        for f in rec.iter() {
            let x: f64 = f.trim().parse().map_err(|_| in_file(line, format!("'{f}' is not a number")))?;
            v.push(x);
        }
        out.push(QueryPoint { s: v[1..].to_vec(), t: v[0] });
    }
    Ok(out)
}

/// Forecast times `t_last + i·step` for `i = 1, 2, ...` up to `t_last + horizon`.
pub fn forecast_times(times: &[f64], horizon: f64, step: Option<f64>) -> CliResult<Vec<f64>> {
    let last = *times.last().expect("datasets are non-empty");
    let step = match step {
        Some(s) => s,
        None if times.len() >= 2 => last - times[times.len() - 2],
        None => return usage("--horizon with a single time step needs --step"),
    };
    if !(step > 0.0 && step.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return usage("--horizon must be >= 0 and --step > 0");
    }
    let n = (horizon / step + 1e-9).floor() as usize;
    Ok((1..=n).map(|i| last + i as f64 * step).collect())
}

pub fn run(args: PredictArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.model.config.as_deref(), "predict")?;
    let data = data_path(args.data.as_ref(), &cfg)?;
    let ds = load_dataset(&data, None)?;
    let model = Model::resolve(&args.model, &cfg, Some(&ds))?;
    let post = Posterior::compute(&model, &ds.grid, &ds.times, &ds.y, args.source)?;
    let sigma2 = model.spec.noise_variance;
    let weights = post.weights();

    let mut rows = Vec::with_capacity(ds.n_t() * ds.n_s());
    for (k, &t) in ds.times.iter().enumerate() {
        for j in 0..ds.n_s() {
            let var = post.var[(k, j)];
            rows.push(PredictionRow {
                t,
                s: ds.grid.row(j).iter().copied().collect(),
                y: ds.y[(k, j)],
                mean: post.mean[(k, j)],
                sd: var.sqrt(),
                sd_obs: (var + sigma2).sqrt(),
                weight: weights[(k, j)],
            });
        }
    }

    let mut queries = match &args.queries {
        Some(p) => read_queries(p)?,
        None => Vec::new(),
    };
    if let Some(h) = args.horizon {
        for t in forecast_times(&ds.times, h, args.step)? {
            queries.extend((0..ds.n_s()).map(|j| QueryPoint {
                s: ds.grid.row(j).iter().copied().collect(),
                t,
            }));
        }
    } else if args.step.is_some() {
        return usage("--step needs --horizon");
    }
    if !queries.is_empty() {
        let source = match args.source {
            SourceChoice::Smoothed => Source::Smoothed,
            SourceChoice::Filtered => Source::Filtered,
        };
        let marg = predict_at(&model.spec, &ds.grid, &ds.times, &ds.y, &model.policy, &queries, source)?;
        for (q, m) in queries.into_iter().zip(marg) {
            rows.push(PredictionRow {
                t: q.t,
                s: q.s,
                y: f64::NAN,
                mean: m.mean,
                sd: m.var.sqrt(),
                sd_obs: (m.var + sigma2).sqrt(),
                weight: f64::NAN,
            });
        }
    }

    emit(args.output.as_deref(), &to_csv(ds.grid.ncols(), &rows))?;
    if let Some(report) = &args.report {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "predict",
            "method": model.method.name(),
            "kernel": model.spec,
            "source": match args.source { SourceChoice::Smoothed => "smoothed", SourceChoice::Filtered => "filtered" },
            "metrics": row_metrics(&rows, sigma2)?,
        });
        emit_json(Some(report), &doc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip_through_csv() {
        let rows = vec![
            PredictionRow {
                t: 0.1,
                s: vec![-1.0, 0.5],
                y: 1.0 / 3.0,
                mean: 0.2,
                sd: 0.7,
                sd_obs: 0.9,
                weight: 0.5,
            },
            PredictionRow {
                t: 0.3,
                s: vec![-1.0, 0.5],
                y: f64::NAN,
                mean: -0.25,
                sd: 1e-9,
                sd_obs: 0.5,
                weight: f64::NAN,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, to_csv(2, &rows)).unwrap();
        let back = read_predictions(&path).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].y.is_nan() && back[1].weight.is_nan());
        assert_eq!(back[1].mean, rows[1].mean);
    }

    #[test]
    fn forecast_grid() {
        assert_eq!(forecast_times(&[0.0, 0.5, 1.0], 1.0, None).unwrap(), vec![1.5, 2.0]);
        assert_eq!(forecast_times(&[0.0], 0.3, Some(0.1)).unwrap().len(), 3);
        assert!(forecast_times(&[0.0], 1.0, None).is_err());
    }
}

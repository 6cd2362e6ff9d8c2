use std::collections::BTreeMap;

use serde_json::json;
use strcgp::bench::{doubling_sizes, run_bench};
use strcgp::weights::WeightPolicy;

use crate::args::BenchArgs;
use crate::config::{Model, RunConfig};
use crate::error::{usage, CliResult};
use crate::output::{csv_bytes, emit, emit_json, fmt_float, SCHEMA_VERSION};

pub fn run(args: BenchArgs) -> CliResult<()> {
    let cfg = RunConfig::load(args.model.config.as_deref(), "bench")?;
    if args.model.method.is_some() || cfg.method.is_some() {
        return usage("bench always times stgp against st-rcgp; drop --method");
    }
    if args.reps == 0 {
        return usage("--reps must be at least 1");
    }
    let sizes = args.sizes.clone().unwrap_or_else(|| doubling_sizes(500, 16000));
    if sizes.iter().any(|n| *n < 2) {
        return usage("--sizes must all be at least 2");
    }
    let model = Model::resolve(&args.model, &cfg, None)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let policies = [("stgp", WeightPolicy::constant()), ("st-rcgp", model.policy.clone())];
    let report = run_bench(&model.spec, &policies, &sizes, args.reps, seed)?;

    let rows = report.rows.iter().flat_map(|r| {
        r.seconds
            .iter()
            .enumerate()
            .map(move |(i, s)| vec![r.method.clone(), r.n_t.to_string(), i.to_string(), fmt_float(*s)])
    });
    let header = ["method", "n_t", "rep", "seconds"].map(String::from);
    emit(args.output.as_deref(), &csv_bytes(&header, rows))?;

    if let Some(path) = &args.report {
        let slopes: BTreeMap<&str, f64> = report.slopes.iter().map(|(m, s)| (m.as_str(), *s)).collect();
        let summary: Vec<_> = report
            .rows
            .iter()
            .map(|r| json!({ "method": r.method, "n_t": r.n_t, "min": r.min(), "mean": r.mean(), "variance": r.variance() }))
            .collect();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "bench",
            "kernel": model.spec,
            "sizes": sizes,
            "reps": args.reps,
            "seed": seed,
            "slopes": slopes,
            "time_ratio": report.time_ratio("st-rcgp", "stgp"),
            "rows": summary,
        });
        emit_json(Some(path), &doc)?;
    }
    Ok(())
}

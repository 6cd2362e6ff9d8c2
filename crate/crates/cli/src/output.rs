use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use strcgp::diagnostics::MetricReport;
use strcgp::filtering::{run_smoother, FilterTrace};
use strcgp::ssm::StateSpaceModel;

use crate::args::SourceChoice;
use crate::config::Model;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Shortest round-trip decimal; empty for NaN.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn parse_float(field: &str, line: u64) -> CliResult<f64> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(f64::NAN);
    }
    f.parse().map_err(|_| {
        CliError::Core(strcgp::Error::Parse {
            line,
            message: format!("'{f}' is not a number"),
        })
    })
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::File {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|source| CliError::File {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

pub fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    emit(path, text.as_bytes())
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn spatial_header(d_s: usize) -> Vec<String> {
    (1..=d_s).map(|i| format!("s{i}")).collect()
}

/// Filter trace plus `n_t × n_s` means and variances of `f`.
pub struct Posterior {
    pub trace: FilterTrace,
    pub mean: DMatrix<f64>,
    pub var: DMatrix<f64>,
}

impl Posterior {
    pub fn compute(model: &Model, grid: &DMatrix<f64>, times: &[f64], y: &DMatrix<f64>, source: SourceChoice) -> CliResult<Self> {
        let ssm = StateSpaceModel::assemble(&model.spec, grid)?;
        let trace = strcgp::filtering::run_filter(&ssm, times, y, &model.policy)?;
        let states = match source {
            SourceChoice::Smoothed => run_smoother(&trace)?,
            SourceChoice::Filtered => trace.filtered(),
        };
        let (mean, var) = trace.f_marginals(&states);
        Ok(Posterior { trace, mean, var })
    }

    /// Weights at observed points, NaN elsewhere.
    pub fn weights(&self) -> DMatrix<f64> {
        let mask = self.trace.mask_matrix();
        self.trace.weight_matrix().zip_map(&mask, |w, m| if m { w } else { f64::NAN })
    }

    /// Scores the predictive of `y` against `target` at every point where it is finite.
    pub fn metrics(&self, target: &DMatrix<f64>, noise_variance: f64) -> CliResult<MetricReport> {
        let w = self.weights();
        let (mut yt, mut m, mut sd, mut wt) = (vec![], vec![], vec![], vec![]);
        for k in 0..target.nrows() {
            for j in 0..target.ncols() {
                if target[(k, j)].is_finite() {
                    yt.push(target[(k, j)]);
                    m.push(self.mean[(k, j)]);
                    sd.push((self.var[(k, j)] + noise_variance).sqrt());
                    wt.push(w[(k, j)]);
                }
            }
        }
        Ok(MetricReport::compute(&yt, &m, &sd, &wt, noise_variance.sqrt())?)
    }
}

/// Rows of a matrix as JSON arrays with `null` for NaN.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<Option<f64>>> {
    (0..m.nrows())
        .map(|k| m.row(k).iter().map(|v| v.is_finite().then_some(*v)).collect())
        .collect()
}

//! Synthetic data generators, outlier injection and CSV input/output.
//!
//! Observation CSV: header `t,s1,...,s{d},y`, one row per `(t, s)`, empty `y` for missing
//! values. Every timestamp must carry the same set of locations.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::psd_cholesky;
use crate::ssm::{KernelSpec, StateSpaceModel, TemporalFamily, TemporalKernel};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    /// `n_s × d_s`; zero columns for a purely temporal dataset.
    pub grid: DMatrix<f64>,
    /// `n_t × n_s`, NaN where missing.
    pub y: DMatrix<f64>,
    /// Noisy observations before contamination (synthetic data only).
    pub y_clean: Option<DMatrix<f64>>,
    /// Latent function values (synthetic data only).
    pub latent: Option<DMatrix<f64>>,
    pub outliers: Option<DMatrix<bool>>,
    pub provenance: String,
}

impl Dataset {
    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn n_s(&self) -> usize {
        self.grid.nrows()
    }

    pub fn observed(&self) -> DMatrix<bool> {
        self.y.map(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::InvalidInput("dataset has no timestamps".into()));
        }
        if let Some(w) = self.times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(format!("timestamps not strictly increasing at {}", w[1])));
        }
        let shape = (self.n_t(), self.n_s());
        let bad = |s: (usize, usize)| s != shape;
        if bad(self.y.shape())
            || self.y_clean.as_ref().is_some_and(|m| bad(m.shape()))
            || self.latent.as_ref().is_some_and(|m| bad(m.shape()))
            || self.outliers.as_ref().is_some_and(|m| bad(m.shape()))
        {
            return Err(Error::InvalidInput("matrix shapes do not match n_t × n_s".into()));
        }
        Ok(())
    }

    /// The same dataset with the uncontaminated observations as `y`.
    pub fn decontaminated(&self) -> Option<Dataset> {
        self.y_clean.as_ref().map(|yc| Dataset {
            y: yc.clone(),
            outliers: self.outliers.as_ref().map(|m| m.map(|_| false)),
            provenance: format!("{} (clean)", self.provenance),
            ..self.clone()
        })
    }
}

/// Seeded ChaCha20 stream with Box-Muller normals.
pub struct SimRng {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        self.spare = Some(r * (2.0 * PI * u2).sin());
        r * (2.0 * PI * u2).cos()
    }

    /// `k` distinct indices from `0..n`, in increasing order.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let k = k.min(n);
        for i in 0..k {
            let j = i + self.rng.random_range(0..(n - i));
            idx.swap(i, j);
        }
        let mut out = idx[..k].to_vec();
        out.sort_unstable();
        out
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `g × g` grid on `[lo, hi]²`, first coordinate varying slowest.
pub fn square_grid(g: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let xs = linspace(lo, hi, g);
    DMatrix::from_fn(g * g, 2, |r, c| if c == 0 { xs[r / g] } else { xs[r % g] })
}

/// Where the outliers of the temporal generator go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OutlierPlacement {
    /// Uniformly chosen distinct indices.
    Random,
    /// A contiguous run starting at `start` (fraction of `n_t`).
    Block { start: f64 },
    Indices { indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalMaternConfig {
    pub n_t: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub lengthscale: f64,
    /// `σ_κ²`.
    pub kernel_variance: f64,
    pub noise_variance: f64,
    pub center: bool,
    pub outlier_rate: f64,
    pub outlier_mean: f64,
    pub outlier_sd: f64,
    pub placement: OutlierPlacement,
}

impl Default for TemporalMaternConfig {
    fn default() -> Self {
        TemporalMaternConfig {
            n_t: 200,
            t_start: 0.0,
            t_end: 1.0,
            lengthscale: 0.1,
            kernel_variance: 2.0,
            noise_variance: 0.25,
            center: true,
            outlier_rate: 0.05,
            outlier_mean: 5.0,
            outlier_sd: 1.0,
            placement: OutlierPlacement::Random,
        }
    }
}

impl TemporalMaternConfig {
    /// Kernel the data were generated from.
    pub fn true_spec(&self) -> KernelSpec {
        KernelSpec::temporal_only(
            TemporalKernel::new(TemporalFamily::Matern32, self.lengthscale, self.kernel_variance.sqrt()),
            self.noise_variance,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StQuadraticConfig {
    /// Points per side of the square grid on `[-1, 1]²`.
    pub grid: usize,
    pub n_t: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub noise_sd: f64,
    /// Probability that a point with `s1 < 0` is replaced by an outlier.
    pub outlier_rate: f64,
    /// Restrict contamination to these step indices (all steps when `None`).
    pub contaminated_steps: Option<Vec<usize>>,
}

impl Default for StQuadraticConfig {
    fn default() -> Self {
        StQuadraticConfig {
            grid: 25,
            n_t: 10,
            t_start: 0.2,
            t_end: 0.8,
            noise_sd: 0.2,
            outlier_rate: 0.1,
            contaminated_steps: None,
        }
    }
}

/// `sin(2πt) s1² + cos(2πt) s2²`.
pub fn quadratic_latent(s1: f64, s2: f64, t: f64) -> f64 {
    (2.0 * PI * t).sin() * s1 * s1 + (2.0 * PI * t).cos() * s2 * s2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OutlierKind {
    /// `|N(mean, sd²)|`.
    AbsNormal { mean: f64, sd: f64 },
    /// Uniform on `[-hi, -lo] ∪ [lo, hi]`.
    SymmetricUniform { lo: f64, hi: f64 },
}

impl OutlierKind {
    fn draw(&self, rng: &mut SimRng) -> f64 {
        match *self {
            OutlierKind::AbsNormal { mean, sd } => (mean + sd * rng.normal()).abs(),
            OutlierKind::SymmetricUniform { lo, hi } => {
                let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                sign * (lo + (hi - lo) * rng.uniform())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    All,
    /// Locations with a negative first coordinate.
    NegativeS1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contamination {
    /// Per-point replacement probability.
    pub rate: f64,
    pub kind: OutlierKind,
    pub region: Region,
    pub steps: Option<Vec<usize>>,
}

/// Samples `f` from an arbitrary kernel through its state-space form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub kernel: KernelSpec,
    pub n_t: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Square grid side on `[-1, 1]²`; `None` gives a single site.
    pub grid: Option<usize>,
    pub contamination: Option<Contamination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "preset")]
pub enum GeneratorConfig {
    TemporalMatern(TemporalMaternConfig),
    StQuadratic(StQuadraticConfig),
    Custom(CustomConfig),
}

pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    match config {
        GeneratorConfig::TemporalMatern(c) => gen_temporal(c, seed),
        GeneratorConfig::StQuadratic(c) => gen_spatiotemporal(c, seed),
        GeneratorConfig::Custom(c) => gen_custom(c, seed),
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("outlier rate must lie in [0, 1], got {rate}")))
    }
}

/// Matérn-3/2 GP sample on a regular time grid with outliers replacing some observations.
pub fn gen_temporal(config: &TemporalMaternConfig, seed: u64) -> Result<Dataset> {
    check_rate(config.outlier_rate)?;
    let n = config.n_t;
    if n < 2 {
        return Err(Error::InvalidInput("n_t must be at least 2".into()));
    }
    let spec = config.true_spec();
    spec.validate()?;
    let mut rng = SimRng::new(seed);
    let times = linspace(config.t_start, config.t_end, n);
    let k = DMatrix::from_fn(n, n, |i, j| spec.temporal.cov(times[i], times[j], times[0]));
    let chol = psd_cholesky(&k)?;
    let z = DVector::from_fn(n, |_, _| rng.normal());
    let mut f = chol.factor.l() * z;
    if config.center {
        let mean = f.mean();
        f.add_scalar_mut(-mean);
    }
    let noise_sd = config.noise_variance.sqrt();
    let y_clean = DVector::from_fn(n, |i, _| f[i] + noise_sd * rng.normal());

    let n_out = (config.outlier_rate * n as f64).round() as usize;
    let idx = match &config.placement {
        OutlierPlacement::Random => rng.choose(n, n_out),
        OutlierPlacement::Block { start } => {
            let first = ((start * n as f64).floor() as usize).min(n - n_out.min(n));
            (first..first + n_out).collect()
        }
        OutlierPlacement::Indices { indices } => {
            if let Some(i) = indices.iter().find(|i| **i >= n) {
                return Err(Error::InvalidInput(format!("outlier index {i} out of range")));
            }
            indices.clone()
        }
    };
    let mut y = y_clean.clone();
    let mut outliers = DMatrix::from_element(n, 1, false);
    let kind = OutlierKind::AbsNormal {
        mean: config.outlier_mean,
        sd: config.outlier_sd,
    };
    for &i in &idx {
        y[i] = kind.draw(&mut rng);
        outliers[(i, 0)] = true;
    }
    Ok(Dataset {
        times,
        grid: DMatrix::zeros(1, 0),
        y: DMatrix::from_column_slice(n, 1, y.as_slice()),
        y_clean: Some(DMatrix::from_column_slice(n, 1, y_clean.as_slice())),
        latent: Some(DMatrix::from_column_slice(n, 1, f.as_slice())),
        outliers: Some(outliers),
        provenance: format!("temporal-matern seed={seed}"),
    })
}

fn contaminate(
    y: &mut DMatrix<f64>,
    outliers: &mut DMatrix<bool>,
    grid: &DMatrix<f64>,
    c: &Contamination,
    rng: &mut SimRng,
) -> Result<()> {
    check_rate(c.rate)?;
    for k in 0..y.nrows() {
        let active = c.steps.as_ref().is_none_or(|s| s.contains(&k));
        for j in 0..y.ncols() {
            let in_region = match c.region {
                Region::All => true,
                Region::NegativeS1 => grid.ncols() > 0 && grid[(j, 0)] < 0.0,
            };
            // one draw per point keeps the stream independent of the active set
            let u = rng.uniform();
            let v = c.kind.draw(rng);
            if active && in_region && u < c.rate {
                y[(k, j)] = v;
                outliers[(k, j)] = true;
            }
        }
    }
    Ok(())
}

/// Deterministic quadratic field on a square grid with outliers in the `s1 < 0` half.
pub fn gen_spatiotemporal(config: &StQuadraticConfig, seed: u64) -> Result<Dataset> {
    if config.grid < 1 || config.n_t < 2 {
        return Err(Error::InvalidInput("grid must be ≥ 1 and n_t ≥ 2".into()));
    }
    let mut rng = SimRng::new(seed);
    let grid = square_grid(config.grid, -1.0, 1.0);
    let times = linspace(config.t_start, config.t_end, config.n_t);
    let n_s = grid.nrows();
    let latent = DMatrix::from_fn(config.n_t, n_s, |k, j| quadratic_latent(grid[(j, 0)], grid[(j, 1)], times[k]));
    let mut y_clean = latent.clone();
    for k in 0..config.n_t {
        for j in 0..n_s {
            y_clean[(k, j)] += config.noise_sd * rng.normal();
        }
    }
    let mut y = y_clean.clone();
    let mut outliers = DMatrix::from_element(config.n_t, n_s, false);
    let c = Contamination {
        rate: config.outlier_rate,
        kind: OutlierKind::SymmetricUniform { lo: 6.0, hi: 8.0 },
        region: Region::NegativeS1,
        steps: config.contaminated_steps.clone(),
    };
    contaminate(&mut y, &mut outliers, &grid, &c, &mut rng)?;
    Ok(Dataset {
        times,
        grid,
        y,
        y_clean: Some(y_clean),
        latent: Some(latent),
        outliers: Some(outliers),
        provenance: format!("st-quadratic seed={seed}"),
    })
}

/// Symmetric square root through the eigendecomposition, tolerant of singular input.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

/// Draws the latent field by running the linear SDE forward.
pub fn gen_custom(config: &CustomConfig, seed: u64) -> Result<Dataset> {
    if config.n_t < 2 {
        return Err(Error::InvalidInput("n_t must be at least 2".into()));
    }
    let grid = match config.grid {
        Some(g) if config.kernel.spatial.is_some() => square_grid(g, -1.0, 1.0),
        Some(_) => return Err(Error::InvalidInput("a spatial grid needs a spatial kernel".into())),
        None => DMatrix::zeros(1, 0),
    };
    let model = StateSpaceModel::assemble(&config.kernel, &grid)?;
    let times = linspace(config.t_start, config.t_end, config.n_t);
    let mut rng = SimRng::new(seed);
    let d = model.state_dim();
    let n_s = model.n_s();
    let draw = |rng: &mut SimRng, root: &DMatrix<f64>| root * DVector::from_fn(d, |_, _| rng.normal());

    let mut z = draw(&mut rng, &psd_sqrt(&model.sigma0));
    let tr = model.discretize(times[1] - times[0])?;
    let root = psd_sqrt(&tr.sigma);
    let mut latent = DMatrix::zeros(config.n_t, n_s);
    for k in 0..config.n_t {
        if k > 0 {
            z = tr.apply_mean(&z) + draw(&mut rng, &root);
        }
        for j in 0..n_s {
            latent[(k, j)] = z[model.obs_index(j)];
        }
    }
    let sd = config.kernel.noise_sd();
    let y_clean = latent.map(|f| f + sd * rng.normal());
    let mut y = y_clean.clone();
    let mut outliers = DMatrix::from_element(config.n_t, n_s, false);
    if let Some(c) = &config.contamination {
        contaminate(&mut y, &mut outliers, &grid, c, &mut rng)?;
    }
    Ok(Dataset {
        times,
        grid,
        y,
        y_clean: Some(y_clean),
        latent: Some(latent),
        outliers: Some(outliers),
        provenance: format!("custom seed={seed}"),
    })
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn spatial_header(d_s: usize) -> Vec<String> {
    (1..=d_s).map(|i| format!("s{i}")).collect()
}

/// Writes observations as `t,s1..,y`.
pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(spatial_header(ds.grid.ncols()));
    header.push("y".into());
    w.write_record(&header).map_err(csv_err)?;
    for (k, t) in ds.times.iter().enumerate() {
        for j in 0..ds.n_s() {
            let mut rec = vec![fmt_float(*t)];
            rec.extend(ds.grid.row(j).iter().map(|v| fmt_float(*v)));
            rec.push(fmt_float(ds.y[(k, j)]));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the ground truth as `t,s1..,f,y_clean,outlier`.
pub fn write_truth_csv<W: Write>(ds: &Dataset, out: W) -> Result<()> {
    let latent = ds
        .latent
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("dataset has no ground truth".into()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(spatial_header(ds.grid.ncols()));
    header.extend(["f", "y_clean", "outlier"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for (k, t) in ds.times.iter().enumerate() {
        for j in 0..ds.n_s() {
            let mut rec = vec![fmt_float(*t)];
            rec.extend(ds.grid.row(j).iter().map(|v| fmt_float(*v)));
            rec.push(fmt_float(latent[(k, j)]));
            rec.push(ds.y_clean.as_ref().map_or(String::new(), |m| fmt_float(m[(k, j)])));
            let o = ds.outliers.as_ref().is_some_and(|m| m[(k, j)]);
            rec.push(if o { "1" } else { "0" }.into());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_csv(ds, std::fs::File::create(path)?)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut ds = read_csv(std::fs::File::open(path)?)?;
    ds.provenance = path.display().to_string();
    Ok(ds)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_field(s: &str, name: &str, line: u64) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {name}: cannot parse '{s}' as a number"),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse {
            line,
            message: format!("column {name}: non-finite value"),
        })
    }
}

struct Row {
    t: f64,
    s: Vec<f64>,
    y: f64,
    line: u64,
}

fn read_rows<R: Read>(input: R, tail: &[&str]) -> Result<(usize, Vec<(Row, Vec<String>)>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let n_tail = tail.len();
    let fail = |m: String| Error::Parse { line: 1, message: m };
    if header.len() < 1 + n_tail || header[0] != "t" || header[header.len() - n_tail..] != *tail {
        return Err(fail(format!("expected header t,s1..,{}, got {}", tail.join(","), header.join(","))));
    }
    let d_s = header.len() - 1 - n_tail;
    if header[1..=d_s] != spatial_header(d_s)[..] {
        return Err(fail(format!("spatial columns must be named s1..s{d_s}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let t = parse_field(&rec[0], "t", line)?;
        let s = (0..d_s)
            .map(|i| parse_field(&rec[1 + i], &header[1 + i], line))
            .collect::<Result<Vec<_>>>()?;
        let first_tail = &rec[1 + d_s];
        let y = if first_tail.trim().is_empty() {
            f64::NAN
        } else {
            parse_field(first_tail, tail[0], line)?
        };
        let extra = (2 + d_s..rec.len()).map(|i| rec[i].to_string()).collect();
        rows.push((Row { t, s, y, line }, extra));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok((d_s, rows))
}

/// Arranges rows onto a regular `n_t × n_s` layout and returns the row index of each input row.
fn layout(d_s: usize, rows: &[Row]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<(usize, usize)>)> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].t.total_cmp(&rows[b].t));
    let mut times: Vec<f64> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        if times.last() != Some(&rows[i].t) {
            times.push(rows[i].t);
            groups.push(Vec::new());
        }
        groups.last_mut().expect("group exists").push(i);
    }
    let key = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    let first = &groups[0];
    let mut first_sorted = first.clone();
    first_sorted.sort_by_key(|&i| rows[i].line);
    let mut site_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut sites: Vec<Vec<f64>> = Vec::new();
    for &i in &first_sorted {
        let r = &rows[i];
        if site_index.insert(key(&r.s), sites.len()).is_some() {
            return Err(Error::DuplicatePoint { t: r.t, line: r.line });
        }
        sites.push(r.s.clone());
    }
    let n_s = sites.len();
    let mut pos = vec![(0, 0); rows.len()];
    for (k, g) in groups.iter().enumerate() {
        let mut seen = vec![false; n_s];
        for &i in g {
            let r = &rows[i];
            let j = *site_index.get(&key(&r.s)).ok_or_else(|| {
                Error::GridMismatch(format!("line {}: location {:?} at t={} is not in the grid", r.line, r.s, r.t))
            })?;
            if seen[j] {
                return Err(Error::DuplicatePoint { t: r.t, line: r.line });
            }
            seen[j] = true;
            pos[i] = (k, j);
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::GridMismatch(format!("t={} is missing location {:?}", times[k], sites[j])));
        }
    }
    let grid = DMatrix::from_fn(n_s, d_s, |i, c| sites[i][c]);
    Ok((times, grid, pos))
}

pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let (d_s, rows) = read_rows(input, &["y"])?;
    let rows: Vec<Row> = rows.into_iter().map(|r| r.0).collect();
    let (times, grid, pos) = layout(d_s, &rows)?;
    let mut y = DMatrix::from_element(times.len(), grid.nrows(), f64::NAN);
    for (r, &(k, j)) in rows.iter().zip(&pos) {
        y[(k, j)] = r.y;
    }
    Ok(Dataset {
        times,
        grid,
        y,
        y_clean: None,
        latent: None,
        outliers: None,
        provenance: "csv".into(),
    })
}

/// Reads a truth file and attaches it to `ds`, which must share its layout.
pub fn attach_truth<R: Read>(ds: &mut Dataset, input: R) -> Result<()> {
    let (d_s, rows) = read_rows(input, &["f", "y_clean", "outlier"])?;
    let (bare, extra): (Vec<Row>, Vec<Vec<String>>) = rows.into_iter().unzip();
    let (times, grid, pos) = layout(d_s, &bare)?;
    if times != ds.times || grid != ds.grid {
        return Err(Error::GridMismatch("truth file does not match the observations".into()));
    }
    let shape = (times.len(), grid.nrows());
    let mut latent = DMatrix::from_element(shape.0, shape.1, f64::NAN);
    let mut y_clean = latent.clone();
    let mut outliers = DMatrix::from_element(shape.0, shape.1, false);
    for ((r, e), &(k, j)) in bare.iter().zip(&extra).zip(&pos) {
        latent[(k, j)] = r.y;
        if !e[0].trim().is_empty() {
            y_clean[(k, j)] = parse_field(&e[0], "y_clean", r.line)?;
        }
        outliers[(k, j)] = match e[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line: r.line,
                    message: format!("outlier flag must be 0 or 1, got '{other}'"),
                })
            }
        };
    }
    ds.latent = Some(latent);
    ds.y_clean = Some(y_clean);
    ds.outliers = Some(outliers);
    Ok(())
}

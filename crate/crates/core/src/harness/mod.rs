//! Run configuration, convergence studies, EOC tables and their CSV/JSON
//! reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::{
    adapt_loop, geometric_estimators_parametric, residual_estimator_parametric, trace_estimators, AdaptHistory,
    AdaptOptions, DEFAULT_THETA,
};
use crate::fem::DEFAULT_TOL;
use crate::geometry::{manufactured, ImplicitSurface, LiftKind};
use crate::mesh::{build_bulk_mesh, build_sphere_mesh, build_torus_mesh, BulkMesh, SurfaceMesh};
use crate::narrowband::{narrowband_solve, NarrowBandProblem, DEFAULT_DELTA_RATIO, WINDOW_LOWER, WINDOW_UPPER};
use crate::parametric::{parametric_forcing, parametric_solve, ErrorReport, ParametricProblem};
use crate::trace::{trace_solve, TraceProblem};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Finest icosphere level accepted in a configuration.
pub const MAX_SURFACE_LEVEL: usize = 8;
/// Largest bulk resolution accepted in a configuration.
pub const MAX_BULK_CELLS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Parametric,
    Trace,
    Narrowband,
    Adaptive,
}

impl Method {
    /// Whether `levels` are surface refinement levels (as opposed to bulk
    /// cells per axis).
    pub fn uses_surface_levels(self) -> bool {
        matches!(self, Method::Parametric | Method::Adaptive)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parametric" => Ok(Method::Parametric),
            "trace" => Ok(Method::Trace),
            "narrowband" => Ok(Method::Narrowband),
            "adaptive" => Ok(Method::Adaptive),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::Parametric => "parametric",
            Method::Trace => "trace",
            Method::Narrowband => "narrowband",
            Method::Adaptive => "adaptive",
        };
        f.write_str(name)
    }
}

fn default_delta_ratio() -> f64 {
    DEFAULT_DELTA_RATIO
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iters() -> usize {
    8
}

/// One convergence study, read from a JSON file.
///
/// `levels` are icosphere levels (or torus grid levels, `8·2^l × 4·2^l`) for
/// the parametric method, the starting level for the adaptive method, and
/// bulk cells per axis for the trace and narrow band methods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub surface: ImplicitSurface,
    #[serde(default)]
    pub lift: LiftKind,
    pub levels: Vec<usize>,
    #[serde(default = "default_delta_ratio")]
    pub delta_ratio: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    /// Half side of the bulk box; defaults to 1.6 times the largest half extent.
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Directory receiving `<method>.csv` and `<method>.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// The reference study of each method on the unit sphere.
    pub fn default_for(method: Method) -> Self {
        let levels = match method {
            Method::Parametric => vec![2, 3, 4, 5],
            Method::Adaptive => vec![2],
            Method::Trace => vec![8, 16, 32, 48],
            Method::Narrowband => vec![16, 24, 32, 48],
        };
        Self {
            method,
            surface: ImplicitSurface::Sphere { radius: 1.0 },
            lift: LiftKind::ClosestPoint,
            levels,
            delta_ratio: DEFAULT_DELTA_RATIO,
            theta: DEFAULT_THETA,
            max_iters: default_max_iters(),
            solver_tol: DEFAULT_TOL,
            half_width: None,
            output: None,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.surface.validated()?;
        if self.levels.is_empty() {
            return bad("levels must not be empty".into());
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("levels must be strictly increasing, got {:?}", self.levels));
        }
        let last = *self.levels.last().unwrap();
        if self.method.uses_surface_levels() {
            if last > MAX_SURFACE_LEVEL {
                return bad(format!("surface level {last} above {MAX_SURFACE_LEVEL}"));
            }
        } else if self.levels[0] < 2 || last > MAX_BULK_CELLS {
            return bad(format!("bulk cells per axis must lie in [2, {MAX_BULK_CELLS}]"));
        }
        if !(WINDOW_LOWER..=WINDOW_UPPER).contains(&self.delta_ratio) {
            return bad(format!("delta_ratio {} outside [{WINDOW_LOWER}, {WINDOW_UPPER}]", self.delta_ratio));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta {} outside (0, 1]", self.theta));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-2) {
            return bad(format!("solver_tol {} outside (0, 1e-2]", self.solver_tol));
        }
        if let Some(w) = self.half_width {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("half_width {w} must be positive"));
            }
        }
        if self.method == Method::Adaptive && self.levels.len() != 1 {
            return bad("the adaptive method takes a single starting level".into());
        }
        if matches!(self.surface, ImplicitSurface::Torus { .. }) && self.lift == LiftKind::ScaledRadial {
            log::info!("the scaled radial lift coincides with the closest point lift on a torus");
        }
        Ok(())
    }

    fn half_width(&self) -> f64 {
        self.half_width.unwrap_or_else(|| 1.6 * self.surface.half_extents().max())
    }

    /// Surface mesh at refinement level `level`.
    pub fn surface_mesh(&self, level: usize) -> Result<SurfaceMesh> {
        match self.surface {
            ImplicitSurface::Torus { .. } => build_torus_mesh(&self.surface, 8 << level, 4 << level),
            _ => build_sphere_mesh(&self.surface, level),
        }
    }

    pub fn bulk_mesh(&self, cells: usize) -> Result<BulkMesh> {
        build_bulk_mesh(&self.surface, self.half_width(), cells)
    }
}

/// Serializes non-finite numbers as strings (`"inf"`, `"-inf"`, `"nan"`),
/// which plain JSON numbers cannot hold.
fn finite_or_string<S: Serializer>(value: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if value.is_finite() {
        s.serialize_f64(*value)
    } else {
        s.serialize_str(&value.to_string())
    }
}

fn map_finite_or_string<S: Serializer>(map: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    #[derive(Serialize)]
    struct Wrapped(#[serde(serialize_with = "finite_or_string")] f64);
    let mut out = s.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        out.serialize_entry(k, &Wrapped(*v))?;
    }
    out.end()
}

/// One level of a convergence study.
#[derive(Clone, Debug, Serialize)]
pub struct EocRow {
    pub level: usize,
    pub h: f64,
    pub n_dof: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    pub iterations: usize,
    /// Estimator totals and method-specific diagnostics.
    pub extra: BTreeMap<String, f64>,
    /// Rates against the previous row; empty on the first row.
    #[serde(serialize_with = "map_finite_or_string")]
    pub rates: BTreeMap<String, f64>,
}

/// Convergence table with rates between consecutive rows.
#[derive(Clone, Debug, Serialize)]
pub struct EocTable {
    pub schema_version: u32,
    pub config: RunConfig,
    pub rows: Vec<EocRow>,
}

/// Quantities whose rates are tabulated besides the two error norms.
const RATE_KEYS: [&str; 8] = [
    "eta",
    "lambda",
    "beta",
    "mu",
    "xi",
    "err_band",
    "max_distance",
    "max_normal_deviation",
];

/// `log(e_k/e_{k+1}) / log(h_k/h_{k+1})` for consecutive pairs.
pub fn compute_eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::BadSeries(format!(
            "need two or more matching entries, got {} errors and {} sizes",
            errors.len(),
            hs.len()
        )));
    }
    if hs.iter().any(|h| !(*h > 0.0)) || hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::BadSeries("mesh sizes must be positive and strictly decreasing".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::BadSeries(format!("nonpositive error {e}")));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}

/// Rate of one pair, with `+∞` when the finer error vanished.
fn pair_rate(e0: f64, e1: f64, h0: f64, h1: f64) -> f64 {
    match compute_eoc(&[e0, e1], &[h0, h1]) {
        Ok(r) => r[0],
        Err(_) if e1 <= 0.0 => f64::INFINITY,
        Err(_) => f64::NAN,
    }
}

impl EocTable {
    pub fn new(config: RunConfig, mut rows: Vec<EocRow>) -> Result<Self> {
        if rows.windows(2).any(|w| w[1].h >= w[0].h) {
            return Err(Error::BadSeries("mesh sizes must strictly decrease down the table".into()));
        }
        for k in 1..rows.len() {
            let (prev, row) = (&rows[k - 1], &rows[k]);
            let mut rates = BTreeMap::new();
            rates.insert("err_l2".to_string(), pair_rate(prev.err_l2, row.err_l2, prev.h, row.h));
            rates.insert("err_h1".to_string(), pair_rate(prev.err_h1, row.err_h1, prev.h, row.h));
            for key in RATE_KEYS {
                if let (Some(a), Some(b)) = (prev.extra.get(key), row.extra.get(key)) {
                    rates.insert(key.to_string(), pair_rate(*a, *b, prev.h, row.h));
                }
            }
            rows[k].rates = rates;
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            config,
            rows,
        })
    }

    /// Rates of `key` down the table (one fewer than the rows).
    pub fn rates(&self, key: &str) -> Vec<f64> {
        self.rows[1..].iter().map(|r| r.rates.get(key).copied().unwrap_or(f64::NAN)).collect()
    }

    fn extra_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.rows.iter().flat_map(|r| r.extra.keys().cloned()).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    fn rate_keys(&self) -> Vec<String> {
        let mut keys: Vec<String> = self.rows.iter().flat_map(|r| r.rates.keys().cloned()).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    /// One line per row: the fixed columns, the extras and the rates, with
    /// empty cells where a row has no value.
    pub fn to_csv(&self) -> Result<String> {
        let extras = self.extra_keys();
        let rates = self.rate_keys();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["level", "h", "n_dof", "err_l2", "err_h1", "iterations"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(extras.iter().cloned());
        header.extend(rates.iter().map(|k| format!("rate_{k}")));
        w.write_record(&header)?;
        let cell = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut record = vec![
                row.level.to_string(),
                row.h.to_string(),
                row.n_dof.to_string(),
                row.err_l2.to_string(),
                row.err_h1.to_string(),
                row.iterations.to_string(),
            ];
            record.extend(extras.iter().map(|k| cell(row.extra.get(k))));
            record.extend(rates.iter().map(|k| cell(row.rates.get(k))));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<method>.csv` and `<method>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = self.config.method.to_string();
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&csv_path, self.to_csv()?)?;
        std::fs::write(&json_path, self.to_json()? + "\n")?;
        Ok((csv_path, json_path))
    }
}

fn row_from_report(level: usize, report: ErrorReport) -> EocRow {
    EocRow {
        level,
        h: report.h_max,
        n_dof: report.n_dof,
        err_l2: report.err_l2,
        err_h1: report.err_h1,
        iterations: report.iterations,
        extra: report.extra,
        rates: BTreeMap::new(),
    }
}

/// Solves one level of a study and attaches the method's estimator totals.
pub fn solve_level(config: &RunConfig, level: usize) -> Result<ErrorReport> {
    let solution = manufactured(&config.surface).map_err(|e| e.at(level, "manufactured solution"))?;
    match config.method {
        Method::Parametric | Method::Adaptive => {
            let mesh = config.surface_mesh(level).map_err(|e| e.at(level, "surface mesh"))?;
            let problem = ParametricProblem::new(mesh, config.lift, solution).map_err(|e| e.at(level, "setup"))?;
            let (u, mut report) = parametric_solve(&problem, config.solver_tol).map_err(|e| e.at(level, "solve"))?;
            let normals = &problem.mesh.normals;
            let residual = residual_estimator_parametric(&problem.mesh, &u.coefficients, |t, x| {
                parametric_forcing(&problem, x, &normals[t])
            })
            .map_err(|e| e.at(level, "estimate"))?;
            let geometric = geometric_estimators_parametric(&problem.surface, &problem.mesh, config.lift)
                .map_err(|e| e.at(level, "estimate"))?;
            report.extra.insert("eta".into(), residual.residual_total());
            report.extra.insert("osc".into(), residual.oscillation_total());
            report.extra.insert("lambda".into(), geometric.lambda_total());
            report.extra.insert("beta".into(), geometric.beta_total());
            report.extra.insert("mu".into(), geometric.mu_total());
            Ok(report)
        }
        Method::Trace => {
            let bulk = config.bulk_mesh(level).map_err(|e| e.at(level, "bulk mesh"))?;
            let problem = TraceProblem::new(bulk, solution).map_err(|e| e.at(level, "cut surface"))?;
            let (u, mut report) = trace_solve(&problem, config.solver_tol).map_err(|e| e.at(level, "solve"))?;
            let field = trace_estimators(&problem, &u.coefficients).map_err(|e| e.at(level, "estimate"))?;
            report.extra.insert("eta".into(), field.residual_total());
            report.extra.insert("xi".into(), field.xi_total());
            Ok(report)
        }
        Method::Narrowband => {
            let bulk = config.bulk_mesh(level).map_err(|e| e.at(level, "bulk mesh"))?;
            let problem = NarrowBandProblem::with_ratio(bulk, solution, config.delta_ratio)
                .map_err(|e| e.at(level, "band"))?;
            narrowband_solve(&problem, config.solver_tol)
                .map(|(_, report)| report)
                .map_err(|e| e.at(level, "solve"))
        }
    }
}

/// Runs the adaptive loop of an `adaptive` configuration.
pub fn run_adaptive(config: &RunConfig) -> Result<AdaptHistory> {
    let level = config.levels[0];
    let solution = manufactured(&config.surface).map_err(|e| e.at(level, "manufactured solution"))?;
    let mesh = config.surface_mesh(level).map_err(|e| e.at(level, "surface mesh"))?;
    let options = AdaptOptions {
        theta: config.theta,
        max_iters: config.max_iters,
        solver_tol: config.solver_tol,
        lift: config.lift,
        ..Default::default()
    };
    adapt_loop(mesh, &solution, options)
}

/// Solves every level of `config` and tabulates the rates. For the adaptive
/// method each row is one loop iteration, with `h = n_dof^{-1/2}`. Outputs
/// are written when the configuration names a directory.
pub fn run_convergence(config: &RunConfig) -> Result<EocTable> {
    config.validate()?;
    let rows = if config.method == Method::Adaptive {
        run_adaptive(config)?
            .steps
            .into_iter()
            .map(|s| {
                let mut extra = BTreeMap::new();
                extra.insert("eta".into(), s.eta);
                extra.insert("lambda".into(), s.lambda);
                extra.insert("beta".into(), s.beta);
                extra.insert("mu".into(), s.mu);
                EocRow {
                    level: s.iter,
                    h: (s.n_dof as f64).powf(-0.5),
                    n_dof: s.n_dof,
                    err_l2: s.err_l2,
                    err_h1: s.err_h1,
                    iterations: 0,
                    extra,
                    rates: BTreeMap::new(),
                }
            })
            .collect()
    } else {
        let mut rows = Vec::with_capacity(config.levels.len());
        for &level in &config.levels {
            let report = solve_level(config, level)?;
            log::info!("{} level {level}: h {:.4e}, err_h1 {:.4e}", config.method, report.h_max, report.err_h1);
            rows.push(row_from_report(level, report));
        }
        rows
    };
    let table = EocTable::new(config.clone(), rows)?;
    if let Some(dir) = &config.output {
        table.write(dir)?;
    }
    Ok(table)
}

/// A rate window a study must meet.
#[derive(Clone, Debug)]
pub struct RateCheck {
    pub quantity: String,
    pub observed: Vec<f64>,
    pub window: (f64, f64),
    pub passed: bool,
}

/// The rate windows of each method's reference study, applied to the last
/// rates of `table` (two for the parametric method, one otherwise).
pub fn check_rates(table: &EocTable) -> Vec<RateCheck> {
    let windows: &[(&str, f64, f64)] = match table.config.method {
        Method::Parametric => &[("err_h1", 0.9, 1.1), ("err_l2", 1.8, 2.2)],
        Method::Trace => &[("err_h1", 0.85, 1.15), ("err_l2", 1.7, 2.3)],
        Method::Narrowband => &[("err_h1", 0.85, 1.15), ("err_band", 1.2, 1.7)],
        Method::Adaptive => &[],
    };
    let count = if table.config.method == Method::Parametric { 2 } else { 1 };
    let mut checks: Vec<RateCheck> = windows
        .iter()
        .map(|&(key, lo, hi)| {
            let all = table.rates(key);
            let observed = all[all.len().saturating_sub(count)..].to_vec();
            let passed = observed.len() == count && observed.iter().all(|r| (lo..=hi).contains(r));
            RateCheck {
                quantity: key.to_string(),
                observed,
                window: (lo, hi),
                passed,
            }
        })
        .collect();
    if table.config.method == Method::Adaptive {
        let slope = adaptive_slope(table);
        checks.push(RateCheck {
            quantity: "err_h1 vs n_dof slope".into(),
            observed: vec![slope],
            window: (-0.65, -0.35),
            passed: table.rows.len() >= 7 && slope > -0.65 && slope < -0.35,
        });
    }
    checks
}

fn adaptive_slope(table: &EocTable) -> f64 {
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| ((r.n_dof as f64).ln(), r.err_h1.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_levels(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse levels `{text}`; use `a..b` or `a,b,c`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
    }
}

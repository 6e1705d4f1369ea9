//! Configuration, runners and reports behind the `gph` command line.
//!
//! Every runner writes human-readable lines to a caller-supplied sink and
//! returns a [`Verdict`]; errors map to exit code 2 through [`exit_code`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{check_size, oracle_check_terms};
use crate::error::{Error, Result};
use crate::ladder::{
    conserved_integral, ladder_report, relative_drift, TolerancePolicy, MAX_LADDER_INDEX,
};
use crate::nls::{evolve, gaussian_ic, soliton_ic, EvolveParams};
use crate::operator::{
    build_w, build_w_product, normalize as normalize_expr, parse, pretty_print, OperatorExpr,
    MAX_ORDER,
};
use crate::separable::{apply_expr, product_state, product_state_unchecked, trace, Ensemble};
use crate::spectral::{make_grid, normalize, GridSpec, WaveField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    fn label(ok: bool) -> &'static str {
        if ok {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// 0 pass, 1 tolerance failure or numerical blow-up, 2 usage or config error.
pub fn exit_code(result: &Result<Verdict>) -> i32 {
    match result {
        Ok(Verdict::Pass) => 0,
        Ok(Verdict::Fail) | Err(Error::NonFinite(_)) => 1,
        Err(_) => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_points: usize,
    pub half_length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_points: 512,
            half_length: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub n_max: u32,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig { n_max: 6 }
    }
}

/// Initial data on the run grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `eta sech(eta (x - x0)) exp(i v x / 2)`
    Soliton {
        #[serde(default = "one")]
        eta: f64,
        #[serde(default)]
        velocity: f64,
        #[serde(default)]
        x0: f64,
    },
    /// `a exp(-(x - x0)^2 / (2 w^2)) exp(i v x / 2)`
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        velocity: f64,
        #[serde(default)]
        x0: f64,
    },
    /// Gaussian envelope times a seeded random trigonometric polynomial.
    Random {
        #[serde(default = "three")]
        modes: u32,
        #[serde(default = "one")]
        width: f64,
    },
    /// Explicit samples; `im` may be omitted for real data.
    Samples {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn three() -> u32 {
    3
}

fn yes() -> bool {
    true
}

impl Default for Shape {
    fn default() -> Self {
        Shape::Soliton {
            eta: 1.0,
            velocity: 0.0,
            x0: 0.0,
        }
    }
}

impl Shape {
    pub fn sample(&self, grid: GridSpec, seed: u64) -> Result<WaveField> {
        match *self {
            Shape::Soliton { eta, velocity, x0 } => {
                if !(eta.is_finite() && eta > 0.0) {
                    return Err(Error::Config(format!(
                        "soliton eta = {eta} must be positive"
                    )));
                }
                Ok(soliton_ic(grid, eta, velocity, x0))
            }
            Shape::Gaussian {
                amplitude,
                width,
                velocity,
                x0,
            } => {
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::Config(format!(
                        "gaussian width = {width} must be positive"
                    )));
                }
                Ok(gaussian_ic(grid, amplitude, width, velocity, x0))
            }
            Shape::Random { modes, width } => {
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::Config(format!(
                        "random width = {width} must be positive"
                    )));
                }
                Ok(random_state(grid, modes, width, seed))
            }
            Shape::Samples { ref re, ref im } => {
                if re.len() != grid.n_points() || !(im.is_empty() || im.len() == re.len()) {
                    return Err(Error::Config(format!(
                        "samples must have {} entries",
                        grid.n_points()
                    )));
                }
                let values = re
                    .iter()
                    .enumerate()
                    .map(|(m, &r)| Complex64::new(r, im.get(m).copied().unwrap_or(0.0)))
                    .collect();
                WaveField::new(grid, values)
            }
        }
    }
}

/// `exp(-x^2 / (2 w^2)) sum_{|m| <= modes} c_m exp(i m x / w)` with seeded `c_m`.
pub fn random_state(grid: GridSpec, modes: u32, width: f64, seed: u64) -> WaveField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = modes as i64;
    let coeffs: Vec<(f64, Complex64)> = (-m..=m)
        .map(|k| {
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (k as f64 / width, c)
        })
        .collect();
    WaveField::from_fn(grid, |x| {
        let envelope = (-x * x / (2.0 * width * width)).exp();
        let sum: Complex64 = coeffs
            .iter()
            .map(|&(nu, c)| c * Complex64::from_polar(1.0, nu * x))
            .sum();
        envelope * sum
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialState {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub weight: f64,
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "yes")]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleSource {
    Path(PathBuf),
    Inline(Vec<EnsembleEntry>),
    Wrapped { entries: Vec<EnsembleEntry> },
}

impl Default for EnsembleSource {
    fn default() -> Self {
        EnsembleSource::Inline(vec![
            EnsembleEntry {
                weight: 0.3,
                shape: Shape::Gaussian {
                    amplitude: 1.0,
                    width: 1.0,
                    velocity: 0.5,
                    x0: -1.0,
                },
                normalize: true,
            },
            EnsembleEntry {
                weight: 0.7,
                shape: Shape::Soliton {
                    eta: 0.5,
                    velocity: 0.0,
                    x0: 0.0,
                },
                normalize: true,
            },
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    pub n_max: u32,
    pub j: Vec<u32>,
    /// `k = j + n - 1 + offset` for each offset.
    pub k_offsets: Vec<u32>,
    /// Tensor products `W_{n_1}^1 (x) W_{n_2}^{1+n_1} (x) ...`, listed by orders.
    pub products: Vec<Vec<u32>>,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            n_max: 4,
            j: vec![1],
            k_offsets: vec![0],
            products: vec![vec![2, 3]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_points: usize,
    pub half_length: f64,
    pub n_max: u32,
    /// Particle number of the input state; defaults to `n` for each `W_n^1`.
    pub k: Option<u32>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_points: 16,
            half_length: 6.0,
            n_max: 3,
            k: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub ladder: TolerancePolicy,
    /// Route (a) against route (b), relative to `max(1, |a|)`.
    pub route_agreement: f64,
    pub hierarchy_drift: f64,
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ladder: TolerancePolicy::default(),
            route_agreement: 1e-9,
            hierarchy_drift: 1e-5,
            oracle: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub evolve: EvolveParams,
    pub ladder: LadderConfig,
    pub initial: InitialState,
    pub ensemble: Option<EnsembleSource>,
    pub hierarchy: HierarchyConfig,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub output: OutputConfig,
    pub tolerances: Tolerances,
    /// Directory that relative ensemble paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(RunConfig::default());
        }
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        make_grid(self.grid.n_points, self.grid.half_length)
    }

    pub fn initial_state(&self) -> Result<WaveField> {
        let phi = self.initial.shape.sample(self.grid_spec()?, self.seed)?;
        if self.initial.normalize {
            normalize(&phi)
        } else {
            Ok(phi)
        }
    }

    pub fn load_ensemble(&self) -> Result<Ensemble> {
        let grid = self.grid_spec()?;
        let source = self.ensemble.clone().unwrap_or_default();
        let entries = match source {
            EnsembleSource::Inline(entries) | EnsembleSource::Wrapped { entries } => entries,
            EnsembleSource::Path(p) => {
                let path = match &self.base_dir {
                    Some(base) if p.is_relative() => base.join(&p),
                    _ => p,
                };
                let text = fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("ensemble {}: {e}", path.display())))?;
                parse_ensemble(&text)?
            }
        };
        let components = entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let phi = e.shape.sample(grid, self.seed.wrapping_add(i as u64))?;
                Ok((e.weight, if e.normalize { normalize(&phi)? } else { phi }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(components)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        self.evolve.validate()?;
        if !(1..=MAX_LADDER_INDEX).contains(&self.ladder.n_max) {
            return Err(Error::Config(format!(
                "ladder.n_max = {} must lie in 1..={MAX_LADDER_INDEX}",
                self.ladder.n_max
            )));
        }
        if !(1..=MAX_ORDER).contains(&self.hierarchy.n_max) {
            return Err(Error::Config(format!(
                "hierarchy.n_max = {} must lie in 1..={MAX_ORDER}",
                self.hierarchy.n_max
            )));
        }
        if self.hierarchy.j.contains(&0) {
            return Err(Error::Config("hierarchy.j entries start at 1".into()));
        }
        if !(1..=3).contains(&self.oracle.n_max) {
            return Err(Error::Config(format!(
                "oracle.n_max = {} must lie in 1..=3",
                self.oracle.n_max
            )));
        }
        Ok(())
    }
}

/// A top-level array of entries or `{"entries": [...]}`.
pub fn parse_ensemble(text: &str) -> Result<Vec<EnsembleEntry>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        List(Vec<EnsembleEntry>),
        Wrapped { entries: Vec<EnsembleEntry> },
    }
    match serde_json::from_str(text).map_err(|e| Error::Config(format!("ensemble: {e}")))? {
        File::List(v) | File::Wrapped { entries: v } => Ok(v),
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn write_reports(
    cfg: &RunConfig,
    stem: &str,
    csv: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    json: impl FnOnce() -> Result<String>,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if cfg.output.formats.is_empty() {
        return Ok(written);
    }
    fs::create_dir_all(&cfg.output.dir)?;
    if cfg.output.formats.contains(&Format::Csv) {
        let mut buf = Vec::new();
        csv(&mut buf)?;
        let path = cfg.output.dir.join(format!("{stem}.csv"));
        fs::write(&path, buf)?;
        written.push(path);
    }
    if cfg.output.formats.contains(&Format::Json) {
        let path = cfg.output.dir.join(format!("{stem}.json"));
        fs::write(&path, json()? + "\n")?;
        written.push(path);
    }
    Ok(written)
}

/// Evolve the configured wavefunction and check `I_1 .. I_{n_max}` for drift.
pub fn cmd_ladder(cfg: &RunConfig, out: &mut dyn Write) -> Result<Verdict> {
    cfg.validate()?;
    let phi = cfg.initial_state()?;
    let kappa = cfg.evolve.kappa;
    let traj = evolve(&phi, &cfg.evolve)?;
    let report = ladder_report(&traj, cfg.ladder.n_max, kappa)?;
    let policy = cfg.tolerances.ladder;
    for n in 1..=report.n_max() {
        let tol = policy.for_index(n);
        let drift = report.drift(n);
        writeln!(
            out,
            "I_{n}: initial {} drift {} tol {} {}",
            fmt_c(report.series(n)[0]),
            fmt(drift),
            fmt(tol),
            Verdict::label(drift < tol)
        )?;
    }
    for path in write_reports(
        cfg,
        "ladder",
        |buf| report.write_csv(buf),
        || report.to_json(),
    )? {
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(Verdict::from_ok(report.failures(&policy).is_empty()))
}

fn fmt_c(c: Complex64) -> String {
    format!("{}{:+e}i", fmt(c.re), c.im)
}

/// One operator tracked by the hierarchy run.
#[derive(Debug, Clone)]
struct Probe {
    label: String,
    expr: OperatorExpr,
    k: u32,
    /// Ladder indices whose product gives route (a).
    factors: Vec<u32>,
}

fn hierarchy_probes(h: &HierarchyConfig) -> Result<Vec<Probe>> {
    let mut probes = Vec::new();
    for &j in &h.j {
        for n in 1..=h.n_max {
            let expr = build_w(n, j)?;
            for &off in &h.k_offsets {
                probes.push(Probe {
                    label: format!("W_{n}^{j}"),
                    expr: expr.clone(),
                    k: j + n - 1 + off,
                    factors: vec![n],
                });
            }
        }
    }
    for orders in &h.products {
        if orders.iter().any(|&n| !(1..=MAX_LADDER_INDEX).contains(&n)) {
            return Err(Error::Config(format!(
                "product orders {orders:?} must lie in 1..={MAX_LADDER_INDEX}"
            )));
        }
        let expr = build_w_product(orders)?;
        let mut base = 1;
        let label = orders
            .iter()
            .map(|&n| {
                let s = format!("W_{n}^{base}");
                base += n;
                s
            })
            .collect::<Vec<_>>()
            .join("*");
        let total: u32 = orders.iter().sum();
        for &off in &h.k_offsets {
            probes.push(Probe {
                label: label.clone(),
                expr: expr.clone(),
                k: total + off,
                factors: orders.clone(),
            });
        }
    }
    for p in &probes {
        if p.factors.iter().any(|&n| n > MAX_LADDER_INDEX) {
            return Err(Error::Config(format!(
                "{} has no ladder counterpart above n = {MAX_LADDER_INDEX}",
                p.label
            )));
        }
    }
    Ok(probes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyRow {
    pub t: f64,
    pub operator: String,
    pub k: u32,
    pub route_a: Complex64,
    pub route_b: Complex64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchySummary {
    pub operator: String,
    pub k: u32,
    pub max_discrepancy: f64,
    pub drift_a: f64,
    pub drift_b: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    pub kappa: i32,
    pub route_agreement: f64,
    pub drift_tolerance: f64,
    pub rows: Vec<HierarchyRow>,
    pub summary: Vec<HierarchySummary>,
}

impl HierarchyReport {
    pub fn passed(&self) -> bool {
        self.summary.iter().all(|s| s.pass)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "operator",
            "k",
            "re_route_a",
            "im_route_a",
            "re_route_b",
            "im_route_b",
            "discrepancy",
        ])?;
        for r in &self.rows {
            w.write_record([
                fmt(r.t),
                r.operator.clone(),
                r.k.to_string(),
                fmt(r.route_a.re),
                fmt(r.route_a.im),
                fmt(r.route_b.re),
                fmt(r.route_b.im),
                fmt(r.discrepancy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Route (a) `sum_i p_i prod I_n(phi_i)` and route (b) `Tr E gamma^(k)` along
/// the evolved ensemble.
pub fn hierarchy_report(cfg: &RunConfig) -> Result<HierarchyReport> {
    cfg.validate()?;
    let ens = cfg.load_ensemble()?;
    let probes = hierarchy_probes(&cfg.hierarchy)?;
    let kappa = cfg.evolve.kappa;
    let trajectories = ens.evolve(&cfg.evolve)?;
    let times: Vec<f64> = trajectories[0].iter().map(|(t, _)| *t).collect();
    let weights: Vec<f64> = ens.components().iter().map(|(p, _)| *p).collect();

    let tol = cfg.tolerances.route_agreement;
    let per_probe: Vec<Vec<HierarchyRow>> = probes
        .par_iter()
        .map(|probe| {
            times
                .iter()
                .enumerate()
                .map(|(s, &t)| {
                    let mut a = Complex64::new(0.0, 0.0);
                    let mut b = Complex64::new(0.0, 0.0);
                    for (traj, &p) in trajectories.iter().zip(&weights) {
                        let phi = &traj[s].1;
                        let mut prod = Complex64::new(1.0, 0.0);
                        for &n in &probe.factors {
                            prod *= conserved_integral(phi, n, kappa)?;
                        }
                        a += p * prod;
                        let gamma = product_state_unchecked(phi, probe.k)?;
                        b += p * trace(&apply_expr(&probe.expr, &gamma, kappa)?);
                    }
                    Ok(HierarchyRow {
                        t,
                        operator: probe.label.clone(),
                        k: probe.k,
                        route_a: a,
                        route_b: b,
                        discrepancy: (a - b).norm() / a.norm().max(1.0),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let drift_tolerance = cfg.tolerances.hierarchy_drift;
    let summary = per_probe
        .iter()
        .zip(&probes)
        .map(|(rows, probe)| {
            let a: Vec<Complex64> = rows.iter().map(|r| r.route_a).collect();
            let b: Vec<Complex64> = rows.iter().map(|r| r.route_b).collect();
            let max_discrepancy = rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max);
            let (drift_a, drift_b) = (relative_drift(&a), relative_drift(&b));
            HierarchySummary {
                operator: probe.label.clone(),
                k: probe.k,
                max_discrepancy,
                drift_a,
                drift_b,
                pass: max_discrepancy < tol
                    && drift_a < drift_tolerance
                    && drift_b < drift_tolerance,
            }
        })
        .collect();
    Ok(HierarchyReport {
        kappa,
        route_agreement: tol,
        drift_tolerance,
        rows: per_probe.into_iter().flatten().collect(),
        summary,
    })
}

pub fn cmd_hierarchy(cfg: &RunConfig, out: &mut dyn Write) -> Result<Verdict> {
    let report = hierarchy_report(cfg)?;
    for s in &report.summary {
        writeln!(
            out,
            "{} k={}: routes {} (tol {}) drift {} / {} (tol {}) {}",
            s.operator,
            s.k,
            fmt(s.max_discrepancy),
            fmt(report.route_agreement),
            fmt(s.drift_a),
            fmt(s.drift_b),
            fmt(report.drift_tolerance),
            Verdict::label(s.pass)
        )?;
    }
    let json = || Ok(serde_json::to_string_pretty(&report)?);
    for path in write_reports(cfg, "hierarchy", |buf| report.write_csv(buf), json)? {
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(Verdict::from_ok(report.passed()))
}

/// Print `W_n^j`; with `parse_source`, compare it against the parsed text.
pub fn cmd_symbolic(
    n: u32,
    j: u32,
    parse_source: Option<&str>,
    out: &mut dyn Write,
) -> Result<Verdict> {
    let w = build_w(n, j)?;
    writeln!(out, "{}", pretty_print(&w))?;
    writeln!(out, "terms: {}", w.term_count())?;
    let Some(src) = parse_source else {
        return Ok(Verdict::Pass);
    };
    let parsed = normalize_expr(&parse(src)?);
    let equal = parsed.terms == w.terms && (parsed.is_empty() || parsed.slots() == w.slots());
    writeln!(out, "{}", if equal { "EQUAL" } else { "DIFFERENT" })?;
    Ok(Verdict::from_ok(equal))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub state: String,
    pub n: u32,
    pub k: u32,
    pub term: usize,
    pub discrepancy: f64,
}

fn oracle_states(cfg: &RunConfig, grid: GridSpec) -> Result<Vec<(&'static str, WaveField)>> {
    Ok(vec![
        (
            "gaussian",
            normalize(&gaussian_ic(grid, 1.0, 1.0, 0.4, 0.3))?,
        ),
        ("soliton", normalize(&soliton_ic(grid, 1.0, 0.0, 0.0))?),
        ("random", normalize(&random_state(grid, 2, 1.0, cfg.seed))?),
    ])
}

/// Dense against separable evaluation of every term of `W_n^1`, `n <= n_max`.
pub fn oracle_report(cfg: &RunConfig) -> Result<Vec<OracleRow>> {
    cfg.validate()?;
    let o = &cfg.oracle;
    let grid = make_grid(o.n_points, o.half_length)?;
    let ks: Vec<u32> = (1..=o.n_max).map(|n| o.k.unwrap_or(n)).collect();
    for (n, &k) in (1..=o.n_max).zip(&ks) {
        if k < n {
            return Err(Error::Config(format!(
                "oracle.k = {k} is too small for W_{n}^1"
            )));
        }
        check_size(&grid, k as usize)?;
    }
    let mut rows = Vec::new();
    for (name, phi) in oracle_states(cfg, grid)? {
        for (n, &k) in (1..=o.n_max).zip(&ks) {
            let s = product_state(&phi, k)?;
            let w = build_w(n, 1)?;
            for (term, d) in oracle_check_terms(&w, &s, cfg.evolve.kappa)?
                .into_iter()
                .enumerate()
            {
                rows.push(OracleRow {
                    state: name.to_string(),
                    n,
                    k,
                    term,
                    discrepancy: d,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_oracle(cfg: &RunConfig, out: &mut dyn Write) -> Result<Verdict> {
    let rows = oracle_report(cfg)?;
    let tol = cfg.tolerances.oracle;
    let mut ok = true;
    for n in 1..=cfg.oracle.n_max {
        let worst = rows
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.discrepancy)
            .fold(0.0, f64::max);
        ok &= worst < tol;
        writeln!(
            out,
            "W_{n}^1: max discrepancy {} tol {} {}",
            fmt(worst),
            fmt(tol),
            Verdict::label(worst < tol)
        )?;
    }
    let csv = |buf: &mut Vec<u8>| -> Result<()> {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["state", "n", "k", "term", "discrepancy"])?;
        for r in &rows {
            w.write_record([
                r.state.clone(),
                r.n.to_string(),
                r.k.to_string(),
                r.term.to_string(),
                fmt(r.discrepancy),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    let json = || Ok(serde_json::to_string_pretty(&rows)?);
    for path in write_reports(cfg, "oracle", csv, json)? {
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(Verdict::from_ok(ok))
}

//! Configuration-driven experiments.
//!
//! An [`ExperimentConfig`] names one pipeline (extend, verify, poincare,
//! eigen-scan, uniform-scan, cutfem-scan) plus its domains, degrees, seeds
//! and tolerances. [`run`] executes it, evaluates the configured checks as
//! [`Assertion`]s and, given an output directory, writes CSV tables, SVG
//! plots and `report.json`. Tables and plots depend only on the config and
//! the seed; wall-clock timings live in the JSON report alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cutfem::{cutfem_scan, CutScanConfig, CutScanReport};
use crate::error::{Error, Result};
use crate::extension::ExtensionProblem;
use crate::forms::{load_cochain, save_cochain, Cochain, DeRhamOps};
use crate::mesh::{BoxDomain, DomainPair, DomainSpec, Region, Variant};
use crate::oracle;
use crate::par::{self, Exec};
use crate::plot::{bars, Chart, Series, Style};
use crate::spectra::{
    appendix_a_relations, dirichlet_monotonicity_check, eigenvalue_lower_bound_scan, poincare_constant,
    uniform_poincare_scan, Convention,
};

mod claim {
    pub const IDENTITY: &str = "cochain extension operator (iii): D E^k = E^{k+1} D";
    pub const RESTRICTION: &str = "cochain extension operator (i): restriction to Omega and zero trace on dK";
    pub const GAUGE: &str = "gauge formulation of the recursive step";
    pub const ORACLE: &str = "minimal-norm characterisation of extension, Hodge split and potential";
    pub const STABILITY: &str = "cochain extension operator (ii): h-uniform HLambda bound";
    pub const CONVEX: &str = "Poincare constants of convex domains";
    pub const MONOTONE: &str = "Dirichlet Poincare constants are monotone under inclusion";
    pub const DILATION: &str = "first eigenvalue under dilation";
    pub const UNIFORM: &str = "uniform Poincare inequality";
    pub const PROBE: &str = "ambient topology and the extension of harmonic forms";
    pub const DISCRETE: &str = "h-uniform discrete Poincare inequality";
    pub const STABILIZED: &str = "h-uniform stabilised Poincare inequality";
    pub const LOWER_BOUND: &str = "uniform lower bound of the first Neumann eigenvalue";
}

fn default_variant() -> Variant {
    Variant::Mixed
}

fn everything() -> Region {
    Region::Everything
}

/// Numerical thresholds of the checks. All must be positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `‖D E ω − E D ω‖ / ‖ω‖_HΛ`.
    pub cochain_identity: f64,
    pub gauge: f64,
    /// Componentwise agreement with the dense oracles.
    pub oracle: f64,
    /// Oracle checks run only on complexes with at most this many DOFs.
    pub oracle_dofs: usize,
    /// Allowed max/min factor across mesh levels or cut positions.
    pub spread_factor: f64,
    /// Relative tolerance of closed-form eigenvalues.
    pub closed_form: f64,
    /// Absolute slack of the monotonicity check.
    pub monotonicity: f64,
    /// Relative spread of `λ₁ s²` over dilations.
    pub dilation: f64,
    /// Probe residual below which a harmonic class extends.
    pub probe_feasible: f64,
    /// Relative `‖Dτ − Dω‖∞` of the discrete Poincaré pipeline.
    pub discrete_identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cochain_identity: 1e-10,
            gauge: 1e-9,
            oracle: 1e-9,
            oracle_dofs: 200,
            spread_factor: 2.0,
            closed_form: 0.02,
            monotonicity: 1e-8,
            dilation: 1e-10,
            probe_feasible: 1e-8,
            discrete_identity: 1e-12,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        let named = [
            ("cochain_identity", self.cochain_identity),
            ("gauge", self.gauge),
            ("oracle", self.oracle),
            ("oracle_dofs", self.oracle_dofs as f64),
            ("spread_factor", self.spread_factor),
            ("closed_form", self.closed_form),
            ("monotonicity", self.monotonicity),
            ("dilation", self.dilation),
            ("probe_feasible", self.probe_feasible),
            ("discrete_identity", self.discrete_identity),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Expected outcome of the harmonic extension probe for a geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeExpectation {
    Extends,
    Obstructed,
}

/// `Ω ⊂ K` inside a meshed box; mesh size and variant come from the
/// experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub name: String,
    #[serde(rename = "box")]
    pub bounds: BoxDomain,
    pub omega: Region,
    #[serde(default = "everything")]
    pub ambient: Region,
    #[serde(default)]
    pub expect: Option<ProbeExpectation>,
    /// Smallest residual accepted as an obstruction (pinned regression floor).
    #[serde(default)]
    pub probe_floor: Option<f64>,
}

impl Geometry {
    pub fn spec(&self, h: f64, variant: Variant) -> DomainSpec {
        DomainSpec {
            bounds: self.bounds.clone(),
            h,
            omega: self.omega.clone(),
            ambient: self.ambient.clone(),
            variant,
        }
    }

    pub fn from_spec(name: &str, spec: &DomainSpec) -> Self {
        Self {
            name: name.to_string(),
            bounds: spec.bounds.clone(),
            omega: spec.omega.clone(),
            ambient: spec.ambient.clone(),
            expect: None,
            probe_floor: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendExperiment {
    pub domain: DomainSpec,
    pub degree: usize,
    /// Cochain file on `Ω`; a random datum orthogonal to the harmonic
    /// fields is drawn when absent.
    #[serde(default)]
    pub input: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyCheck {
    CochainIdentity,
    Restriction,
    Gauge,
    Stability,
    Oracle,
    TopologyProbe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyExperiment {
    pub geometries: Vec<Geometry>,
    pub h_levels: Vec<f64>,
    pub variants: Vec<Variant>,
    pub degrees: Vec<usize>,
    /// Random data per (geometry, h, variant, degree).
    #[serde(default)]
    pub samples: usize,
    pub checks: Vec<VerifyCheck>,
}

/// Expected first eigenvalue of a geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedForm {
    pub geometry: String,
    pub degree: usize,
    pub convention: Convention,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoincareCheck {
    /// Diameter bounds, reciprocal identities and orderings on convex `Ω`.
    Relations,
    /// `C_{P,0}(A) ≤ C_{P,0}(K)` for the exterior part `A = K \ Ω̄`.
    DirichletMonotonicity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareExperiment {
    pub geometries: Vec<Geometry>,
    pub h: f64,
    pub degrees: Vec<usize>,
    pub conventions: Vec<Convention>,
    #[serde(default)]
    pub closed_form: Vec<ClosedForm>,
    #[serde(default)]
    pub checks: Vec<PoincareCheck>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenCheck {
    Dilation,
    QuarticFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenScanExperiment {
    pub family: Vec<Geometry>,
    pub h: f64,
    pub degree: usize,
    /// Family member whose mesh is dilated.
    pub base: String,
    pub scales: Vec<f64>,
    #[serde(default)]
    pub checks: Vec<EigenCheck>,
    /// Pinned lower bound of `λ₁ diam⁴`.
    #[serde(default)]
    pub quartic_floor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformScanExperiment {
    /// Members `Ω_i`, all inside the same `K`.
    pub members: Vec<Geometry>,
    pub h: f64,
    pub degrees: Vec<usize>,
    #[serde(default)]
    pub samples: usize,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Fail unless some member has more than one component.
    #[serde(default)]
    pub require_disconnected: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutCheck {
    /// `Dτ = Dω` and level-uniform discrete Poincaré ratios.
    Discrete,
    /// Pinned `C_S` and norm-equivalence intervals, `C_S` spread.
    Stabilized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub degree: usize,
    pub lower: f64,
    pub upper: f64,
}

/// One sweep; its `seed` field is replaced by the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedScan {
    pub name: String,
    pub scan: CutScanConfig,
    #[serde(default)]
    pub c_s_intervals: Vec<Interval>,
    #[serde(default)]
    pub norm_interval: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutfemExperiment {
    pub scans: Vec<NamedScan>,
    pub checks: Vec<CutCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Extend(ExtendExperiment),
    Verify(VerifyExperiment),
    Poincare(PoincareExperiment),
    EigenScan(EigenScanExperiment),
    UniformScan(UniformScanExperiment),
    CutfemScan(CutfemExperiment),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Extend(_) => "extend",
            Experiment::Verify(_) => "verify",
            Experiment::Poincare(_) => "poincare",
            Experiment::EigenScan(_) => "eigen-scan",
            Experiment::UniformScan(_) => "uniform-scan",
            Experiment::CutfemScan(_) => "cutfem-scan",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Artifact directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub experiment: Experiment,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_levels(h: &[f64]) -> Result<()> {
    if h.is_empty() {
        return Err(bad("empty h level list"));
    }
    if let Some(v) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(bad(format!("mesh size must be positive, got {v}")));
    }
    Ok(())
}

fn check_degrees(d: &[usize]) -> Result<()> {
    if d.is_empty() {
        return Err(bad("empty degree list"));
    }
    Ok(())
}

fn check_names(g: &[Geometry]) -> Result<()> {
    if g.is_empty() {
        return Err(bad("no geometries given"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for x in g {
        if !seen.insert(&x.name) {
            return Err(bad(format!("duplicate geometry name `{}`", x.name)));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Schema checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if self.name.is_empty() {
            return Err(bad("empty experiment name"));
        }
        match &self.experiment {
            Experiment::Extend(e) => check_levels(&[e.domain.h]),
            Experiment::Verify(v) => {
                check_names(&v.geometries)?;
                check_levels(&v.h_levels)?;
                check_degrees(&v.degrees)?;
                if v.variants.is_empty() {
                    return Err(bad("empty variant list"));
                }
                if v.checks.is_empty() {
                    return Err(bad("no checks requested"));
                }
                let data = v.checks.iter().any(|c| *c != VerifyCheck::TopologyProbe);
                if data && v.samples == 0 {
                    return Err(bad("data checks need samples > 0"));
                }
                if v.checks.contains(&VerifyCheck::Stability) && v.h_levels.len() < 2 {
                    return Err(bad("stability check needs at least two h levels"));
                }
                if v.checks.contains(&VerifyCheck::TopologyProbe) {
                    for g in &v.geometries {
                        match (g.expect, g.probe_floor) {
                            (None, _) => return Err(bad(format!("geometry `{}` has no probe expectation", g.name))),
                            (Some(ProbeExpectation::Obstructed), None) => {
                                return Err(bad(format!("geometry `{}` needs a probe_floor", g.name)))
                            }
                            (_, Some(f)) if !(f > 0.0) => return Err(bad("probe_floor must be positive")),
                            _ => {}
                        }
                    }
                }
                Ok(())
            }
            Experiment::Poincare(p) => {
                check_names(&p.geometries)?;
                check_levels(&[p.h])?;
                check_degrees(&p.degrees)?;
                if p.conventions.contains(&Convention::Stabilized) {
                    return Err(bad("the stabilized convention belongs to cutfem-scan"));
                }
                for c in &p.closed_form {
                    if !p.geometries.iter().any(|g| g.name == c.geometry) {
                        return Err(bad(format!("closed form names unknown geometry `{}`", c.geometry)));
                    }
                    if c.convention == Convention::Stabilized || !(c.lambda > 0.0) {
                        return Err(bad("closed-form entries need a positive eigenvalue and a fitted convention"));
                    }
                }
                Ok(())
            }
            Experiment::EigenScan(e) => {
                check_names(&e.family)?;
                check_levels(&[e.h])?;
                if !e.family.iter().any(|g| g.name == e.base) {
                    return Err(bad(format!("base `{}` is not a family member", e.base)));
                }
                if e.scales.is_empty() || e.scales.iter().any(|s| !(*s > 0.0)) {
                    return Err(bad("scales must be positive and non-empty"));
                }
                if e.checks.contains(&EigenCheck::QuarticFloor) && !e.quartic_floor.is_some_and(|f| f > 0.0) {
                    return Err(bad("quartic-floor check needs a positive quartic_floor"));
                }
                Ok(())
            }
            Experiment::UniformScan(u) => {
                check_names(&u.members)?;
                check_levels(&[u.h])?;
                check_degrees(&u.degrees)?;
                let first = &u.members[0];
                if u.members.iter().any(|m| m.bounds != first.bounds || m.ambient != first.ambient) {
                    return Err(bad("uniform-scan members must share box and ambient"));
                }
                Ok(())
            }
            Experiment::CutfemScan(c) => {
                if c.scans.is_empty() {
                    return Err(bad("no scans given"));
                }
                if c.checks.is_empty() {
                    return Err(bad("no checks requested"));
                }
                for s in &c.scans {
                    check_levels(&s.scan.h_levels)?;
                    check_degrees(&s.scan.degrees)?;
                    if s.scan.offsets == 0 || s.scan.samples == 0 {
                        return Err(bad(format!("scan `{}` needs offsets > 0 and samples > 0", s.name)));
                    }
                    if !(s.scan.penalty_scale > 0.0) {
                        return Err(bad("penalty_scale must be positive"));
                    }
                    if c.checks.contains(&CutCheck::Discrete) && s.scan.h_levels.len() < 2 {
                        return Err(bad("discrete check needs at least two h levels"));
                    }
                    if c.checks.contains(&CutCheck::Stabilized) {
                        let Some([lo, hi]) = s.norm_interval else {
                            return Err(bad(format!("scan `{}` needs a norm_interval", s.name)));
                        };
                        if !(0.0 < lo && lo < hi) {
                            return Err(bad("norm_interval must satisfy 0 < lower < upper"));
                        }
                        for &k in &s.scan.degrees {
                            match s.c_s_intervals.iter().find(|i| i.degree == k) {
                                Some(i) if 0.0 < i.lower && i.lower < i.upper => {}
                                _ => return Err(bad(format!("scan `{}` needs a C_S interval for degree {k}", s.name))),
                            }
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

/// One evaluated check.
#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub check: String,
    /// The statement being checked.
    pub claim: String,
    pub case: String,
    pub value: f64,
    /// Human-readable bound, e.g. `<= 1e-10`.
    pub bound: String,
    pub passed: bool,
}

fn assertion(check: &str, claim: &str, case: &str, value: f64, op: &str, limit: f64) -> Assertion {
    let passed = match op {
        "<=" => value <= limit,
        "<" => value < limit,
        ">=" => value >= limit,
        ">" => value > limit,
        "==" => value == limit,
        _ => unreachable!("unknown relation {op}"),
    };
    Assertion {
        check: check.into(),
        claim: claim.into(),
        case: case.into(),
        value,
        bound: format!("{op} {limit:e}"),
        passed,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub case: String,
    pub seconds: f64,
}

/// A CSV table: header plus pre-formatted rows.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&str]) -> Self {
        Self {
            file: file.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Shortest round-trip scientific notation.
fn num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub assertions: Vec<Assertion>,
    /// Module-level results, as produced by the pipelines.
    pub results: serde_json::Value,
    pub timings: Vec<Timing>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub passed: bool,
    #[serde(skip)]
    pub tables: Vec<Table>,
    /// `(file, svg)`.
    #[serde(skip)]
    pub plots: Vec<(String, String)>,
    /// `(file, cochain)`, saved with [`save_cochain`].
    #[serde(skip)]
    pub cochains: Vec<(String, Cochain)>,
}

impl RunReport {
    pub fn failed(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    pub seed: Option<u64>,
    pub exec: Exec,
}

/// Seed of one case: SplitMix64 over the run seed and the case key.
pub fn case_seed(seed: u64, key: &[u64]) -> u64 {
    let mut z = seed;
    for &k in key {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(k);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::ZeroTrace => "zero-trace",
        Variant::Mixed => "mixed",
    }
}

fn convention_name(c: Convention) -> &'static str {
    match c {
        Convention::NeumannCoclosed => "neumann-coclosed",
        Convention::Dirichlet => "dirichlet",
        Convention::Stabilized => "stabilized",
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn spread(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi / lo
}

struct Ctx {
    seed: u64,
    exec: Exec,
    tol: Tolerances,
    assertions: Vec<Assertion>,
    tables: Vec<Table>,
    plots: Vec<(String, String)>,
    cochains: Vec<(String, Cochain)>,
    timings: Vec<Timing>,
    warnings: Vec<String>,
    results: serde_json::Value,
}

impl Ctx {
    fn chart(&mut self, file: &str, chart: &Chart) {
        match chart.render() {
            Some(svg) => self.plots.push((file.to_string(), svg)),
            None => self.warnings.push(format!("plot {file} skipped: no plottable points")),
        }
    }

    fn timed<T>(&mut self, case: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.timings.push(Timing {
            case: case.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Executes the experiment and, when an output directory is configured,
/// writes its artifacts.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let mut ctx = Ctx {
        seed,
        exec: opts.exec,
        tol: cfg.tolerances.clone(),
        assertions: Vec::new(),
        tables: Vec::new(),
        plots: Vec::new(),
        cochains: Vec::new(),
        timings: Vec::new(),
        warnings: Vec::new(),
        results: serde_json::Value::Null,
    };
    match &cfg.experiment {
        Experiment::Extend(e) => run_extend(&mut ctx, e)?,
        Experiment::Verify(v) => run_verify(&mut ctx, v)?,
        Experiment::Poincare(p) => run_poincare(&mut ctx, p)?,
        Experiment::EigenScan(e) => run_eigen_scan(&mut ctx, e)?,
        Experiment::UniformScan(u) => run_uniform_scan(&mut ctx, u)?,
        Experiment::CutfemScan(c) => run_cutfem(&mut ctx, c)?,
    }
    let mut config = serde_json::to_value(cfg)?;
    config["seed"] = seed.into();
    let mut report = RunReport {
        name: cfg.name.clone(),
        kind: cfg.experiment.kind().to_string(),
        seed,
        config,
        passed: ctx.assertions.iter().all(|a| a.passed),
        assertions: ctx.assertions,
        results: ctx.results,
        timings: ctx.timings,
        warnings: ctx.warnings,
        artifacts: Vec::new(),
        tables: ctx.tables,
        plots: ctx.plots,
        cochains: ctx.cochains,
    };
    if let Some(dir) = opts.out.clone().or_else(|| cfg.output.clone()) {
        write_artifacts(&mut report, &dir)?;
    }
    Ok(report)
}

/// Writes tables, plots and `report.json` into `dir`.
pub fn write_artifacts(report: &mut RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for t in &report.tables {
        std::fs::write(dir.join(&t.file), t.to_csv()?)?;
        names.push(t.file.clone());
    }
    for (file, svg) in &report.plots {
        std::fs::write(dir.join(file), svg)?;
        names.push(file.clone());
    }
    for (file, c) in &report.cochains {
        save_cochain(c, &dir.join(file))?;
        names.push(file.clone());
    }
    names.push("report.json".into());
    report.artifacts = names;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

fn run_extend(ctx: &mut Ctx, e: &ExtendExperiment) -> Result<()> {
    let p = ctx.timed("assemble", || ExtensionProblem::new(&e.domain))?;
    let omega = match &e.input {
        Some(path) => {
            let w = load_cochain(path)?;
            if w.degree != e.degree {
                return Err(Error::DegreeMismatch {
                    expected: e.degree,
                    got: w.degree,
                });
            }
            w
        }
        None => p.random_datum(e.degree, &mut ChaCha8Rng::seed_from_u64(case_seed(ctx.seed, &[0])))?,
    };
    let r = ctx.timed("extend", || p.extend(&omega))?;
    let case = format!("degree {}", e.degree);
    let restricted = p.restrict_to_omega(&r.extended)?;
    let mut a = vec![
        assertion("cochain-identity", claim::IDENTITY, &case, r.cochain_identity, "<=", ctx.tol.cochain_identity),
        assertion("gauge", claim::GAUGE, &case, r.residuals.gauge, "<=", ctx.tol.gauge),
        assertion(
            "restriction",
            claim::RESTRICTION,
            &case,
            max_abs_diff(&restricted.values, &omega.values),
            "==",
            0.0,
        ),
    ];
    if e.domain.variant == Variant::ZeroTrace {
        let outer = p.outer_values(&r.extended)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.push(assertion("zero-trace", claim::RESTRICTION, &case, outer, "==", 0.0));
    }
    ctx.assertions.extend(a);
    ctx.warnings.extend(r.warnings.iter().cloned());
    ctx.results = r.summary();
    ctx.cochains.push(("datum.csv".into(), omega));
    ctx.cochains.push(("extended.csv".into(), r.extended));
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct DatumRow {
    geometry: String,
    h: f64,
    variant: Variant,
    degree: usize,
    sample: usize,
    identity: f64,
    gauge: f64,
    restriction: f64,
    /// Largest `|value|` on `∂K` (zero-trace variant only).
    outer: Option<f64>,
    ratio: f64,
    /// Extension, Hodge split, potential.
    oracle: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize)]
struct ProbeRow {
    geometry: String,
    h: f64,
    generator: usize,
    residual: f64,
    lambda_norm: f64,
}

fn verify_case(
    v: &VerifyExperiment,
    tol: &Tolerances,
    seed: u64,
    (gi, hi, vi): (usize, usize, usize),
) -> Result<(Vec<DatumRow>, Vec<ProbeRow>, Vec<String>, f64)> {
    let t0 = Instant::now();
    let g = &v.geometries[gi];
    let h = v.h_levels[hi];
    let variant = v.variants[vi];
    let p = ExtensionProblem::new(&g.spec(h, variant))?;
    let want = |c: VerifyCheck| v.checks.contains(&c);
    let data = v.checks.iter().any(|c| *c != VerifyCheck::TopologyProbe);
    let dofs: usize = (0..=p.dim()).map(|k| p.ops_k().count(k)).sum();
    let oracle_on = want(VerifyCheck::Oracle) && dofs <= tol.oracle_dofs;
    let mut warnings = Vec::new();
    if want(VerifyCheck::Oracle) && !oracle_on {
        warnings.push(format!("{}: h={h}: {dofs} DOFs exceed the oracle limit", g.name));
    }
    let mut rows = Vec::new();
    let mut probes = Vec::new();
    for &k in &v.degrees {
        if k > p.dim() {
            return Err(bad(format!("degree {k} exceeds the dimension {}", p.dim())));
        }
        if data {
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed(seed, &[gi as u64, hi as u64, vi as u64, k as u64]));
            for s in 0..v.samples {
                let w = p.random_datum(k, &mut rng)?;
                let e = p.extend(&w)?;
                let restricted = p.restrict_to_omega(&e.extended)?;
                let outer = (variant == Variant::ZeroTrace)
                    .then(|| p.outer_values(&e.extended))
                    .transpose()?
                    .map(|o| o.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                let oracle = if oracle_on {
                    let lam = oracle::extension_exterior(&p, &w)?;
                    let got = e.lambda.as_ref().map_or(Vec::new(), |l| l.values.clone());
                    let ext_err = max_abs_diff(&lam, &got);
                    let raw = p.ops_omega().random(k, &mut rng);
                    let split = p.omega_hodge().hodge_decompose(&raw)?;
                    let dense = oracle::hodge_split(p.ops_omega(), &raw)?;
                    let split_err = max_abs_diff(&dense[0], &split.exact.values)
                        .max(max_abs_diff(&dense[1], &split.coexact.values))
                        .max(max_abs_diff(&dense[2], &split.harmonic.values));
                    let pot_err = if k == 0 {
                        0.0
                    } else {
                        let dense = oracle::potential(p.ops_omega(), &raw)?;
                        max_abs_diff(&dense, &p.omega_hodge().minimal_norm_potential(&raw)?.values)
                    };
                    Some([ext_err, split_err, pot_err])
                } else {
                    None
                };
                rows.push(DatumRow {
                    geometry: g.name.clone(),
                    h,
                    variant,
                    degree: k,
                    sample: s,
                    identity: e.cochain_identity,
                    gauge: e.residuals.gauge,
                    restriction: max_abs_diff(&restricted.values, &w.values),
                    outer,
                    ratio: e.ratio,
                    oracle,
                });
                warnings.extend(e.warnings.iter().map(|m| format!("{}: h={h}: {m}", g.name)));
            }
        }
        if want(VerifyCheck::TopologyProbe) {
            let basis = &p.omega_hodge().harmonic(k)?.basis;
            if basis.is_empty() {
                warnings.push(format!("{}: h={h}: no harmonic {k}-fields on Omega to probe", g.name));
            }
            for (j, q) in basis.iter().enumerate() {
                let r = p.harmonic_extension_probe(q)?;
                probes.push(ProbeRow {
                    geometry: g.name.clone(),
                    h,
                    generator: j,
                    residual: r.residual,
                    lambda_norm: r.lambda_norm,
                });
            }
        }
    }
    Ok((rows, probes, warnings, t0.elapsed().as_secs_f64()))
}

fn run_verify(ctx: &mut Ctx, v: &VerifyExperiment) -> Result<()> {
    let cases: Vec<(usize, usize, usize)> = (0..v.geometries.len())
        .flat_map(|g| (0..v.h_levels.len()).flat_map(move |h| (0..v.variants.len()).map(move |x| (g, h, x))))
        .collect();
    let tol = ctx.tol.clone();
    let out = par::map(ctx.exec, &cases, |&c| verify_case(v, &tol, ctx.seed, c));
    let mut rows = Vec::new();
    let mut probes = Vec::new();
    for (c, r) in cases.iter().zip(out) {
        let (rs, ps, ws, secs) = r?;
        rows.extend(rs);
        probes.extend(ps);
        ctx.warnings.extend(ws);
        ctx.timings.push(Timing {
            case: format!("{} h={} {}", v.geometries[c.0].name, v.h_levels[c.1], variant_name(v.variants[c.2])),
            seconds: secs,
        });
    }
    let want = |c: VerifyCheck| v.checks.contains(&c);
    let mut groups: BTreeMap<(String, &str, usize, u64), Vec<&DatumRow>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.geometry.clone(), variant_name(r.variant), r.degree, r.h.to_bits()))
            .or_default()
            .push(r);
    }
    let worst = |rs: &[&DatumRow], f: &dyn Fn(&DatumRow) -> f64| rs.iter().map(|r| f(r)).fold(0.0f64, f64::max);
    for ((g, var, k, hb), rs) in &groups {
        let case = format!("{g} {var} k={k} h={}", f64::from_bits(*hb));
        if want(VerifyCheck::CochainIdentity) {
            let m = worst(rs, &|r| r.identity);
            ctx.assertions.push(assertion("cochain-identity", claim::IDENTITY, &case, m, "<=", tol.cochain_identity));
        }
        if want(VerifyCheck::Restriction) {
            let m = worst(rs, &|r| r.restriction);
            ctx.assertions.push(assertion("restriction", claim::RESTRICTION, &case, m, "==", 0.0));
            if *var == "zero-trace" {
                let m = worst(rs, &|r| r.outer.unwrap_or(f64::NAN));
                ctx.assertions.push(assertion("zero-trace", claim::RESTRICTION, &case, m, "==", 0.0));
            }
        }
        if want(VerifyCheck::Gauge) {
            let m = worst(rs, &|r| r.gauge);
            ctx.assertions.push(assertion("gauge", claim::GAUGE, &case, m, "<=", tol.gauge));
        }
        if want(VerifyCheck::Oracle) && rs.iter().all(|r| r.oracle.is_some()) {
            for (i, what) in ["oracle-extension", "oracle-hodge-split", "oracle-potential"].iter().enumerate() {
                let m = worst(rs, &|r| r.oracle.unwrap()[i]);
                ctx.assertions.push(assertion(what, claim::ORACLE, &case, m, "<=", tol.oracle));
            }
        }
    }
    if want(VerifyCheck::Oracle) && rows.iter().all(|r| r.oracle.is_none()) {
        ctx.assertions.push(assertion("oracle-coverage", claim::ORACLE, "all cases", 0.0, ">", 0.0));
    }
    let mut stab_series = Vec::new();
    if want(VerifyCheck::Stability) {
        let mut per: BTreeMap<(String, &str, usize), Vec<(f64, f64)>> = BTreeMap::new();
        for ((g, var, k, hb), rs) in &groups {
            let m = worst(rs, &|r| r.ratio);
            per.entry((g.clone(), var, *k)).or_default().push((f64::from_bits(*hb), m));
        }
        for ((g, var, k), pts) in per {
            let s = spread(pts.iter().map(|p| p.1));
            let case = format!("{g} {var} k={k}");
            ctx.assertions.push(assertion("stability-spread", claim::STABILITY, &case, s, "<", tol.spread_factor));
            stab_series.push(Series { label: format!("{var} k={k}"), points: pts });
        }
    }
    for pr in &probes {
        let g = v.geometries.iter().find(|g| g.name == pr.geometry).unwrap();
        let case = format!("{} h={} generator {}", pr.geometry, pr.h, pr.generator);
        ctx.assertions.push(match g.expect {
            Some(ProbeExpectation::Extends) => {
                assertion("probe-extends", claim::PROBE, &case, pr.residual, "<=", tol.probe_feasible)
            }
            _ => assertion("probe-obstructed", claim::PROBE, &case, pr.residual, ">", g.probe_floor.unwrap_or(0.0)),
        });
    }
    let mut t = Table::new(
        "verify.csv",
        &[
            "geometry", "h", "variant", "degree", "sample", "identity", "gauge", "restriction", "outer_max", "ratio",
            "oracle_extension", "oracle_split", "oracle_potential",
        ],
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), num);
    for r in &rows {
        let o = r.oracle;
        t.push(vec![
            r.geometry.clone(),
            num(r.h),
            variant_name(r.variant).into(),
            r.degree.to_string(),
            r.sample.to_string(),
            num(r.identity),
            num(r.gauge),
            num(r.restriction),
            opt(r.outer),
            num(r.ratio),
            opt(o.map(|o| o[0])),
            opt(o.map(|o| o[1])),
            opt(o.map(|o| o[2])),
        ]);
    }
    if !rows.is_empty() {
        ctx.tables.push(t);
    }
    if !probes.is_empty() {
        let mut t = Table::new("probe.csv", &["geometry", "h", "generator", "residual", "lambda_norm"]);
        for p in &probes {
            t.push(vec![p.geometry.clone(), num(p.h), p.generator.to_string(), num(p.residual), num(p.lambda_norm)]);
        }
        ctx.tables.push(t);
    }
    if !stab_series.is_empty() {
        ctx.chart(
            "ratio_vs_h.svg",
            &Chart {
                title: "Largest extension ratio vs mesh size".into(),
                x_label: "h (length)".into(),
                y_label: "max ||E w||_HL(K) / ||w||_HL(Omega) (dimensionless)".into(),
                log_x: true,
                log_y: false,
                style: Style::Lines,
                series: stab_series,
                note: None,
            },
        );
    }
    ctx.results = serde_json::json!({ "data": rows, "probes": probes });
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct ConstantRow {
    geometry: String,
    degree: usize,
    convention: Convention,
    lambda1: f64,
    constant: f64,
    kernel_dim: usize,
    expected_kernel_dim: usize,
}

fn run_poincare(ctx: &mut Ctx, p: &PoincareExperiment) -> Result<()> {
    let jobs: Vec<(usize, usize, Convention)> = (0..p.geometries.len())
        .flat_map(|g| p.degrees.iter().flat_map(move |&k| p.conventions.iter().map(move |&c| (g, k, c))))
        .collect();
    let monotone = p.checks.contains(&PoincareCheck::DirichletMonotonicity);
    let relations = p.checks.contains(&PoincareCheck::Relations);
    // one problem per geometry; the exterior is only needed for monotonicity
    let pairs: Vec<Result<(Arc<DeRhamOps>, Option<ExtensionProblem>, f64)>> =
        par::map(ctx.exec, &p.geometries, |g| {
            let t = Instant::now();
            let spec = g.spec(p.h, Variant::ZeroTrace);
            if monotone && g.ambient != Region::Everything || monotone && g.omega != Region::Everything {
                let prob = ExtensionProblem::new(&spec)?;
                Ok((prob.ops_omega().clone(), Some(prob), t.elapsed().as_secs_f64()))
            } else {
                let pair = DomainPair::build(&spec)?;
                let ops = Arc::new(DeRhamOps::assemble(pair.omega.child.clone())?);
                Ok((ops, None, t.elapsed().as_secs_f64()))
            }
        });
    let pairs: Vec<(Arc<DeRhamOps>, Option<ExtensionProblem>, f64)> = pairs.into_iter().collect::<Result<_>>()?;
    for (g, pr) in p.geometries.iter().zip(&pairs) {
        ctx.timings.push(Timing { case: format!("{} assemble", g.name), seconds: pr.2 });
    }
    let rows: Vec<ConstantRow> = par::map(ctx.exec, &jobs, |&(g, k, c)| -> Result<ConstantRow> {
        let r = poincare_constant(&pairs[g].0, k, c)?;
        Ok(ConstantRow {
            geometry: p.geometries[g].name.clone(),
            degree: k,
            convention: c,
            lambda1: r.lambda1,
            constant: r.poincare_constant,
            kernel_dim: r.kernel_dim,
            expected_kernel_dim: r.expected_kernel_dim,
        })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    for c in &p.closed_form {
        let gi = p.geometries.iter().position(|g| g.name == c.geometry).unwrap();
        let got = match rows.iter().find(|r| r.geometry == c.geometry && r.degree == c.degree && r.convention == c.convention) {
            Some(r) => r.lambda1,
            None => poincare_constant(&pairs[gi].0, c.degree, c.convention)?.lambda1,
        };
        let case = format!("{} {} k={}", c.geometry, convention_name(c.convention), c.degree);
        let rel = (got - c.lambda).abs() / c.lambda;
        ctx.assertions.push(assertion("closed-form", claim::CONVEX, &case, rel, "<=", ctx.tol.closed_form));
    }
    let mut rel_json = Vec::new();
    if relations {
        for (g, pr) in p.geometries.iter().zip(&pairs) {
            let rep = ctx.timed(&format!("{} relations", g.name), || appendix_a_relations(&pr.0))?;
            for r in &rep.relations {
                let case = format!("{}: {}", g.name, r.name);
                if r.informational {
                    ctx.warnings.push(format!(
                        "{case}: {:.6e} vs {:.6e} ({}; informational)",
                        r.lhs,
                        r.rhs,
                        if r.holds { "holds" } else { "does not hold" }
                    ));
                } else if r.rhs == 1.0 && r.name.starts_with("C * sqrt") {
                    ctx.assertions.push(assertion("reciprocal", claim::CONVEX, &case, (r.lhs - 1.0).abs(), "<=", 4.0 * f64::EPSILON));
                } else {
                    ctx.assertions.push(assertion("relation", claim::CONVEX, &case, r.lhs, "<=", r.rhs));
                }
            }
            rel_json.push(serde_json::json!({ "geometry": g.name, "report": rep }));
        }
    }
    let mut mono_rows = Vec::new();
    let mono_tol = ctx.tol.monotonicity;
    if monotone {
        for (g, pr) in p.geometries.iter().zip(&pairs) {
            let Some(prob) = &pr.1 else { continue };
            if prob.ops_a().is_none() {
                ctx.warnings.push(format!("{}: Omega = K, no exterior part", g.name));
                continue;
            }
            for &k in &p.degrees {
                let m = ctx.timed(&format!("{} monotonicity k={k}", g.name), || {
                    dirichlet_monotonicity_check(prob, k, mono_tol)
                })?;
                let case = format!("{} k={k}: C(A)={:.6e} C(K)={:.6e}", g.name, m.c_a, m.c_k);
                ctx.assertions.push(assertion(
                    "dirichlet-monotonicity",
                    claim::MONOTONE,
                    &case,
                    m.c_a - m.c_k,
                    "<=",
                    ctx.tol.monotonicity,
                ));
                if let Some(c) = m.c_a_all_closed {
                    ctx.warnings.push(format!(
                        "{} k={k}: constant of A orthogonal to all closed cochains {c:.6e} vs C(K) {:.6e} (informational)",
                        g.name, m.c_k
                    ));
                }
                mono_rows.push((g.name.clone(), m));
            }
        }
    }
    let mut t = Table::new(
        "constants.csv",
        &["geometry", "degree", "convention", "lambda1", "constant", "kernel_dim", "expected_kernel_dim"],
    );
    for r in &rows {
        t.push(vec![
            r.geometry.clone(),
            r.degree.to_string(),
            convention_name(r.convention).into(),
            num(r.lambda1),
            num(r.constant),
            r.kernel_dim.to_string(),
            r.expected_kernel_dim.to_string(),
        ]);
    }
    ctx.tables.push(t);
    if !mono_rows.is_empty() {
        let mut t = Table::new("monotonicity.csv", &["geometry", "degree", "c_a", "c_k", "c_a_all_closed"]);
        for (g, m) in &mono_rows {
            t.push(vec![
                g.clone(),
                m.degree.to_string(),
                num(m.c_a),
                num(m.c_k),
                m.c_a_all_closed.map_or(String::new(), num),
            ]);
        }
        ctx.tables.push(t);
        let cats: Vec<String> = mono_rows.iter().map(|(g, m)| format!("{g} k={}", m.degree)).collect();
        let series = vec![
            Series { label: "C_P,0(A)".into(), points: mono_rows.iter().map(|(_, m)| (0.0, m.c_a)).collect() },
            Series { label: "C_P,0(K)".into(), points: mono_rows.iter().map(|(_, m)| (0.0, m.c_k)).collect() },
        ];
        match bars("Dirichlet constants of A and K", "Poincare constant (length)", &cats, &series) {
            Some(svg) => ctx.plots.push(("monotonicity.svg".into(), svg)),
            None => ctx.warnings.push("plot monotonicity.svg skipped: no plottable points".into()),
        }
    }
    let mono_json: Vec<_> = mono_rows.iter().map(|(g, m)| serde_json::json!({ "geometry": g, "report": m })).collect();
    ctx.results = serde_json::json!({ "constants": rows, "relations": rel_json, "monotonicity": mono_json });
    Ok(())
}

fn omega_ops(g: &Geometry, h: f64) -> Result<Arc<DeRhamOps>> {
    let pair = DomainPair::build(&g.spec(h, Variant::Mixed))?;
    Ok(Arc::new(DeRhamOps::assemble(pair.omega.child.clone())?))
}

fn run_eigen_scan(ctx: &mut Ctx, e: &EigenScanExperiment) -> Result<()> {
    let family: Vec<(String, Arc<DeRhamOps>)> = par::map(ctx.exec, &e.family, |g| Ok((g.name.clone(), omega_ops(g, e.h)?)))
        .into_iter()
        .collect::<Result<_>>()?;
    let base = family.iter().find(|f| f.0 == e.base).unwrap().1.clone();
    let exec = ctx.exec;
    let rep = ctx.timed("scan", || eigenvalue_lower_bound_scan(&family, &base, &e.scales, e.degree, exec))?;
    if e.checks.contains(&EigenCheck::Dilation) {
        let case = format!("{} scales {:?}", e.base, e.scales);
        ctx.assertions.push(assertion("dilation", claim::DILATION, &case, rep.dilation_spread, "<=", ctx.tol.dilation));
    }
    if e.checks.contains(&EigenCheck::QuarticFloor) {
        let case = format!("family of {} (fitted exponent {:.3})", rep.rows.len(), rep.exponent);
        ctx.assertions.push(assertion(
            "quartic-floor",
            claim::LOWER_BOUND,
            &case,
            rep.min_quartic,
            ">=",
            e.quartic_floor.unwrap(),
        ));
    }
    let mut t = Table::new("eigen_scan.csv", &["member", "diameter", "degree", "lambda1", "lambda1_diam4"]);
    for r in &rep.rows {
        t.push(vec![r.member.clone(), num(r.diameter), r.degree.to_string(), num(r.lambda1), num(r.quartic)]);
    }
    ctx.tables.push(t);
    let mut t = Table::new("dilation.csv", &["scale", "lambda1_s2"]);
    for (s, v) in &rep.dilation {
        t.push(vec![num(*s), num(*v)]);
    }
    ctx.tables.push(t);
    ctx.chart(
        "lambda_vs_diameter.svg",
        &Chart {
            title: format!("First Neumann eigenvalue, degree {}", e.degree),
            x_label: "diam(Omega) (length)".into(),
            y_label: "lambda_1 (1/length^2)".into(),
            log_x: true,
            log_y: true,
            style: Style::Markers,
            series: vec![Series {
                label: "lambda_1".into(),
                points: rep.rows.iter().map(|r| (r.diameter, r.lambda1)).collect(),
            }],
            note: Some(format!("fitted log-log slope {:.3}", rep.exponent)),
        },
    );
    ctx.results = serde_json::to_value(&rep)?;
    Ok(())
}

fn run_uniform_scan(ctx: &mut Ctx, u: &UniformScanExperiment) -> Result<()> {
    let members: Vec<(String, ExtensionProblem)> = par::map(ctx.exec, &u.members, |g| {
        Ok((g.name.clone(), ExtensionProblem::new(&g.spec(u.h, u.variant))?))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (seed, exec) = (ctx.seed, ctx.exec);
    let rep = ctx.timed("scan", || uniform_poincare_scan(&members, &u.degrees, u.samples, seed, exec))?;
    for r in &rep.rows {
        let j = u.degrees.iter().position(|&k| k == r.degree).unwrap();
        let case = format!("{} k={}", r.member, r.degree);
        ctx.assertions.push(assertion("finite", claim::UNIFORM, &case, r.neumann.max(r.dirichlet), "<", f64::INFINITY));
        ctx.assertions.push(assertion("proxy-bound", claim::UNIFORM, &case, r.neumann, "<=", rep.bound_proxy[j]));
    }
    if u.require_disconnected {
        let comps = rep.rows.iter().map(|r| r.components).max().unwrap_or(0);
        ctx.assertions.push(assertion("disconnected-member", claim::UNIFORM, "family", comps as f64, ">", 1.0));
    }
    let mut t = Table::new(
        "uniform_scan.csv",
        &["member", "degree", "components", "neumann", "dirichlet", "extension_ratio", "c_p_k", "bound_proxy"],
    );
    for r in &rep.rows {
        let j = u.degrees.iter().position(|&k| k == r.degree).unwrap();
        t.push(vec![
            r.member.clone(),
            r.degree.to_string(),
            r.components.to_string(),
            num(r.neumann),
            num(r.dirichlet),
            num(r.extension_ratio),
            num(rep.c_p_k[j]),
            num(rep.bound_proxy[j]),
        ]);
    }
    ctx.tables.push(t);
    let cats: Vec<String> = u.members.iter().map(|m| m.name.clone()).collect();
    let mut series = Vec::new();
    for &k in &u.degrees {
        let pick = |f: &dyn Fn(&crate::spectra::ScanRow) -> f64| -> Vec<(f64, f64)> {
            cats.iter()
                .map(|m| rep.rows.iter().find(|r| &r.member == m && r.degree == k).map_or((0.0, f64::NAN), |r| (0.0, f(r))))
                .collect()
        };
        series.push(Series { label: format!("Neumann k={k}"), points: pick(&|r| r.neumann) });
        series.push(Series { label: format!("Dirichlet k={k}"), points: pick(&|r| r.dirichlet) });
    }
    match bars("Poincare constants per family member", "constant (length)", &cats, &series) {
        Some(svg) => ctx.plots.push(("constants_bars.svg".into(), svg)),
        None => ctx.warnings.push("plot constants_bars.svg skipped: no plottable points".into()),
    }
    ctx.results = serde_json::to_value(&rep)?;
    Ok(())
}

fn run_cutfem(ctx: &mut Ctx, c: &CutfemExperiment) -> Result<()> {
    let mut reports: Vec<(String, CutScanReport)> = Vec::new();
    for (i, s) in c.scans.iter().enumerate() {
        let mut cfg = s.scan.clone();
        cfg.seed = case_seed(ctx.seed, &[i as u64]);
        let exec = ctx.exec;
        let rep = ctx.timed(&s.name, || cutfem_scan(&cfg, exec))?;
        ctx.warnings.extend(rep.warnings.iter().map(|w| format!("{}: {w}", s.name)));
        if c.checks.contains(&CutCheck::Discrete) {
            ctx.assertions.push(assertion(
                "discrete-identity",
                claim::DISCRETE,
                &s.name,
                rep.identity_residual_max,
                "<=",
                ctx.tol.discrete_identity,
            ));
            for &(k, sp) in &rep.discrete_spread {
                let case = format!("{} k={k}", s.name);
                ctx.assertions.push(assertion("discrete-spread", claim::DISCRETE, &case, sp, "<", ctx.tol.spread_factor));
            }
        }
        if c.checks.contains(&CutCheck::Stabilized) {
            for &(k, sp) in &rep.c_s_spread {
                let case = format!("{} k={k}", s.name);
                let iv = s.c_s_intervals.iter().find(|i| i.degree == k).unwrap();
                let ks = rep.rows.iter().filter(|r| r.degree == k).map(|r| r.c_s);
                let (lo, hi) = ks.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                ctx.assertions.push(assertion("c-s-min", claim::STABILIZED, &case, lo, ">=", iv.lower));
                ctx.assertions.push(assertion("c-s-max", claim::STABILIZED, &case, hi, "<=", iv.upper));
                ctx.assertions.push(assertion("c-s-spread", claim::STABILIZED, &case, sp, "<", ctx.tol.spread_factor));
            }
            let [lo, hi] = s.norm_interval.unwrap();
            ctx.assertions.push(assertion("norm-lower", claim::STABILIZED, &s.name, rep.norm_lower_min, ">=", lo));
            ctx.assertions.push(assertion("norm-upper", claim::STABILIZED, &s.name, rep.norm_upper_max, "<=", hi));
        }
        reports.push((s.name.clone(), rep));
    }
    let mut t = Table::new(
        "cutfem_scan.csv",
        &[
            "scan", "offset", "shift", "h", "degree", "active_elements", "cut_elements", "ghost_facets", "harmonic_dim",
            "c_s", "norm_lower", "norm_upper", "discrete_ratio", "identity_residual",
        ],
    );
    let mut cs_series = Vec::new();
    let mut ratio_series = Vec::new();
    for (name, rep) in &reports {
        for r in &rep.rows {
            t.push(vec![
                name.clone(),
                r.offset.to_string(),
                r.shift.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "),
                num(r.h),
                r.degree.to_string(),
                r.active_elements.to_string(),
                r.cut_elements.to_string(),
                r.ghost_facets.to_string(),
                r.harmonic_dim.to_string(),
                num(r.c_s),
                num(r.norm_lower),
                num(r.norm_upper),
                num(r.discrete_ratio),
                num(r.identity_residual),
            ]);
        }
        let scan = &c.scans.iter().find(|s| &s.name == name).unwrap().scan;
        for &k in &scan.degrees {
            for &h in &scan.h_levels {
                let pts = rep.rows.iter().filter(|r| r.degree == k && r.h == h).map(|r| (r.offset as f64, r.c_s)).collect();
                cs_series.push(Series { label: format!("{name} k={k} h={h}"), points: pts });
            }
            let pts = scan
                .h_levels
                .iter()
                .map(|&h| {
                    let m = rep.rows.iter().filter(|r| r.degree == k && r.h == h).map(|r| r.discrete_ratio).fold(0.0, f64::max);
                    (h, m)
                })
                .collect();
            ratio_series.push(Series { label: format!("{name} k={k}"), points: pts });
        }
    }
    ctx.tables.push(t);
    ctx.chart(
        "c_s_vs_offset.svg",
        &Chart {
            title: "Stabilised Poincare constant vs cut position".into(),
            x_label: "grid offset index".into(),
            y_label: "C_S (length)".into(),
            log_x: false,
            log_y: false,
            style: Style::Markers,
            series: cs_series,
            note: None,
        },
    );
    ctx.chart(
        "discrete_ratio_vs_h.svg",
        &Chart {
            title: "Discrete Poincare ratio vs mesh size".into(),
            x_label: "h (length)".into(),
            y_label: "max ||tau|| / ||d omega|| (length)".into(),
            log_x: true,
            log_y: false,
            style: Style::Lines,
            series: ratio_series,
            note: None,
        },
    );
    ctx.results = serde_json::Value::Array(
        reports
            .iter()
            .map(|(n, r)| serde_json::json!({ "scan": n, "report": r }))
            .collect(),
    );
    Ok(())
}

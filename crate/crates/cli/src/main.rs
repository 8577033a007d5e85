use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cochain_ext::cutfem::CutScanConfig;
use cochain_ext::mesh::{betti_numbers, write_mesh, BoxDomain, DomainPair, DomainSpec, Region};
use cochain_ext::par::{self, Exec};
use cochain_ext::runner::{
    self, CutCheck, CutfemExperiment, Experiment, ExperimentConfig, ExtendExperiment, Geometry, NamedScan,
    PoincareExperiment, RunOptions, RunReport, Tolerances,
};
use cochain_ext::spectra::Convention;
use cochain_ext::Error;

#[derive(Parser)]
#[command(name = "cochain-ext", version, about = "Cochain extension, Hodge decompositions and Poincaré constants")]
struct Cli {
    /// Experiment config (JSON); its `kind` must match the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for case-level parallelism (1 runs sequentially).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mesh a domain spec and write K, Omega and the exterior as mesh files.
    Mesh(DomainArgs),
    /// Extend one cochain (or a random datum) from Omega to K.
    Extend {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        degree: Option<usize>,
        /// Cochain file on Omega.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Identities, gauge, stability, oracle and topology checks (config only).
    Verify,
    /// Poincaré constants and their relations.
    Poincare {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        degree: Option<usize>,
        /// neumann | dirichlet
        #[arg(long, default_value = "neumann")]
        convention: String,
    },
    /// First-eigenvalue scan over a family (config only).
    EigenScan,
    /// Uniform Poincaré scan over a family of holes (config only).
    UniformScan,
    /// Cut-position and refinement sweep on an unfitted mesh.
    CutfemScan(CutArgs),
}

#[derive(Args)]
struct DomainArgs {
    /// Domain spec (JSON: box, h, omega, ambient, variant).
    #[arg(long)]
    domain: Option<PathBuf>,
    /// zero-trace | mixed; overrides the spec.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct CutArgs {
    /// circle:cx,cy,r or annulus:cx,cy,inner,outer
    #[arg(long)]
    levelset: Option<String>,
    #[arg(long, default_value_t = 10)]
    offsets: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.125, 0.0625, 0.03125])]
    h_levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize])]
    degree: Vec<usize>,
    /// Background box as x0,y0,x1,y1.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 1.0, 1.0])]
    r#box: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    penalty_scale: f64,
    #[arg(long, default_value_t = 10)]
    samples: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::Json(_) => "config",
        Error::Io(_) => "io",
        Error::DegenerateBox { .. }
        | Error::InvalidMeshSize(_)
        | Error::UnsupportedDimension(_)
        | Error::EmptySelection
        | Error::UnknownLabel(_)
        | Error::InvalidComplex(_)
        | Error::DegenerateSimplex { .. } => "mesh",
        Error::DegreeMismatch { .. } | Error::ComplexMismatch { .. } | Error::NonConforming { .. } => "input",
        Error::HarmonicComponent { .. } | Error::Incompatible { .. } => "compatibility",
        Error::Factorization(_) | Error::NoConvergence { .. } => "solver",
        _ => "other",
    }
}

fn load_spec(d: &DomainArgs) -> Result<DomainSpec, Error> {
    let path = d.domain.as_ref().ok_or_else(|| bad("--domain is required without --config"))?;
    let mut spec: DomainSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if let Some(v) = &d.variant {
        spec.variant = v.parse()?;
    }
    Ok(spec)
}

fn parse_levelset(s: &str) -> Result<Region, Error> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| bad(format!("bad level set `{s}`")))?;
    let v: Vec<f64> = rest
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{x}` in level set"))))
        .collect::<Result<_, _>>()?;
    match (kind, v.as_slice()) {
        ("circle", [x, y, r]) => Ok(Region::Disk {
            center: vec![*x, *y],
            radius: *r,
        }),
        ("annulus", [x, y, a, b]) => Ok(Region::Annulus {
            center: vec![*x, *y],
            inner: *a,
            outer: *b,
        }),
        _ => Err(bad(format!("level set must be circle:cx,cy,r or annulus:cx,cy,inner,outer, got `{s}`"))),
    }
}

fn config_for(cli: &Cli) -> Result<Option<ExperimentConfig>, Error> {
    let base = |name: &str, experiment: Experiment| ExperimentConfig {
        name: name.to_string(),
        seed: 0,
        output: None,
        tolerances: Tolerances::default(),
        experiment,
    };
    if let Some(path) = &cli.config {
        let cfg = ExperimentConfig::load(path)?;
        let want = match &cli.cmd {
            Cmd::Mesh(_) => return Err(bad("mesh takes --domain, not --config")),
            Cmd::Extend { .. } => "extend",
            Cmd::Verify => "verify",
            Cmd::Poincare { .. } => "poincare",
            Cmd::EigenScan => "eigen-scan",
            Cmd::UniformScan => "uniform-scan",
            Cmd::CutfemScan(_) => "cutfem-scan",
        };
        if cfg.experiment.kind() != want {
            return Err(bad(format!("config kind `{}` does not match subcommand `{want}`", cfg.experiment.kind())));
        }
        return Ok(Some(cfg));
    }
    Ok(Some(match &cli.cmd {
        Cmd::Mesh(_) => return Ok(None),
        Cmd::Extend { domain, degree, input } => base(
            "extend",
            Experiment::Extend(ExtendExperiment {
                domain: load_spec(domain)?,
                degree: degree.ok_or_else(|| bad("--degree is required"))?,
                input: input.clone(),
            }),
        ),
        Cmd::Poincare {
            domain,
            degree,
            convention,
        } => {
            let spec = load_spec(domain)?;
            let convention: Convention = convention.parse()?;
            base(
                "poincare",
                Experiment::Poincare(PoincareExperiment {
                    geometries: vec![Geometry::from_spec("domain", &spec)],
                    h: spec.h,
                    degrees: vec![degree.ok_or_else(|| bad("--degree is required"))?],
                    conventions: vec![convention],
                    closed_form: Vec::new(),
                    checks: Vec::new(),
                }),
            )
        }
        Cmd::CutfemScan(a) => {
            let ls = a.levelset.as_deref().ok_or_else(|| bad("--levelset is required without --config"))?;
            if a.r#box.len() != 4 {
                return Err(bad("--box takes x0,y0,x1,y1"));
            }
            base(
                "cutfem-scan",
                Experiment::CutfemScan(CutfemExperiment {
                    scans: vec![NamedScan {
                        name: ls.to_string(),
                        scan: CutScanConfig {
                            bounds: BoxDomain {
                                lower: a.r#box[..2].to_vec(),
                                upper: a.r#box[2..].to_vec(),
                            },
                            level_set: parse_levelset(ls)?,
                            h_levels: a.h_levels.clone(),
                            offsets: a.offsets,
                            degrees: a.degree.clone(),
                            penalty_scale: a.penalty_scale,
                            samples: a.samples,
                            seed: 0,
                        },
                        c_s_intervals: Vec::new(),
                        norm_interval: None,
                    }],
                    checks: if a.h_levels.len() > 1 { vec![CutCheck::Discrete] } else { Vec::new() },
                }),
            )
        }
        Cmd::Verify | Cmd::EigenScan | Cmd::UniformScan => return Err(bad("this subcommand needs --config")),
    }))
}

fn mesh(d: &DomainArgs, out: Option<&Path>) -> Result<(), Error> {
    let spec = load_spec(d)?;
    let out = out.ok_or_else(|| bad("mesh needs --out"))?;
    let pair = DomainPair::build(&spec)?;
    std::fs::create_dir_all(out)?;
    write_mesh(&pair.k, &out.join("ambient.json"))?;
    write_mesh(&pair.omega.child, &out.join("omega.json"))?;
    if let Some(e) = &pair.exterior {
        write_mesh(&e.child, &out.join("exterior.json"))?;
    }
    let summary = serde_json::json!({
        "ambient": { "counts": pair.k.counts(), "betti": betti_numbers(&pair.k, None)? },
        "omega": { "counts": pair.omega.child.counts(), "betti": betti_numbers(&pair.omega.child, None)? },
        "exterior": pair.exterior.as_ref().map(|e| e.child.counts()),
        "rho": pair.rho,
    });
    std::fs::write(out.join("mesh.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn print_report(r: &RunReport) {
    println!("{} ({}), seed {}", r.name, r.kind, r.seed);
    for a in &r.assertions {
        println!(
            "{} {:<22} {:<48} {:>12.4e} {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.check,
            a.case,
            a.value,
            a.bound
        );
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    if r.assertions.is_empty() {
        println!("{}", serde_json::to_string_pretty(&r.results).unwrap_or_default());
    }
    let passed = r.assertions.iter().filter(|a| a.passed).count();
    println!("{passed}/{} assertions passed", r.assertions.len());
    if !r.artifacts.is_empty() {
        println!("artifacts: {}", r.artifacts.join(", "));
    }
}

fn main_inner(cli: &Cli) -> Result<bool, Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(bad("--threads must be positive"));
        }
        par::set_threads(n);
    }
    let exec = match cli.threads {
        Some(1) => Exec::Sequential,
        _ => Exec::default(),
    };
    if let Cmd::Mesh(d) = &cli.cmd {
        if cli.config.is_some() {
            return Err(bad("mesh takes --domain, not --config"));
        }
        mesh(d, cli.out.as_deref())?;
        return Ok(true);
    }
    let cfg = config_for(cli)?.expect("non-mesh subcommand");
    let opts = RunOptions {
        out: cli.out.clone(),
        seed: cli.seed,
        exec,
    };
    let report = runner::run(&cfg, &opts)?;
    print_report(&report);
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let msg = serde_json::json!({ "error": error_kind(&e), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

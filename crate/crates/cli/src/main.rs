use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use capdim::boxcount::{count_curve, BoxCountResult};
use capdim::capacity::{solve_equilibrium, SolverOptions};
use capdim::experiments::{
    run_capacity_boxcount, run_inequalities, run_project, run_psi_phi, run_tube,
    CapacityBoxcountConfig, ExperimentReport, InequalitiesConfig, ProjectConfig, PsiPhiConfig,
    SetSpec, TubeConfig,
};
use capdim::kernels::{KernelFamily, KernelSpec};
use capdim::pointset::{cantor_spec, generate_ifs, product_set, sierpinski_spec, PointSet, DEFAULT_POINT_CAP};
use capdim::profiles::{
    default_r_grid, estimate_profile, fit_scaling, verify_inequalities, ProfileCurve,
    ProfileOptions, SlopeVariant, DEFAULT_INEQUALITY_TOL,
};
use capdim::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_RESOURCE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

const SUITES: [&str; 4] = ["capacity-boxcount", "psi-phi", "tube", "inequalities"];

#[derive(Parser)]
#[command(name = "capdim", version, about = "Capacity-based box-dimension profiles of point clouds")]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Largest point count accepted anywhere in the run.
    #[arg(long, global = true)]
    point_cap: Option<usize>,
    /// JSON file with the command's configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a point set.
    Generate {
        #[command(subcommand)]
        generator: Generator,
    },
    /// Capacity and equilibrium measure at one scale.
    Capacity(CapacityArgs),
    /// Mesh-cube counts over a grid of scales.
    Boxcount(BoxcountArgs),
    /// Dimension profile over a grid of exponents, with inequality checks.
    Profile(ProfileArgs),
    /// Box dimensions of random projections against the profile.
    ProjectExperiment(ProjectArgs),
    /// Run a verification suite.
    Verify {
        /// One of capacity-boxcount, psi-phi, tube, inequalities.
        suite: String,
    },
}

#[derive(Subcommand)]
enum Generator {
    Cantor {
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        depth: u32,
    },
    Sierpinski {
        #[arg(long)]
        depth: u32,
    },
    /// Equally spaced points on [0, 1].
    Segment {
        #[arg(long)]
        points: usize,
    },
    Product {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Iterated function system read from a JSON file.
    Ifs {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    r: f64,
    #[arg(long, value_enum, default_value = "phi")]
    kernel: Kernel,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write the equilibrium weights as CSV to this file.
    #[arg(long)]
    dump_weights: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Phi,
    Psi,
}

#[derive(Args)]
struct BoxcountArgs {
    #[arg(long)]
    set: PathBuf,
    /// Scale; repeat for a grid. Defaults to the profile grid of the set.
    #[arg(long = "r")]
    r: Vec<f64>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    set: PathBuf,
    /// Exponent; repeat for a grid.
    #[arg(long = "s")]
    s: Vec<f64>,
    /// Exponent grid as `start:step:stop`.
    #[arg(long)]
    s_grid: Option<String>,
    /// Scale; repeat for a grid. Defaults to the profile grid of the set.
    #[arg(long = "r")]
    r: Vec<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Lower,
    Ols,
    Upper,
}

impl From<Variant> for SlopeVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Lower => SlopeVariant::Lower,
            Variant::Ols => SlopeVariant::Ols,
            Variant::Upper => SlopeVariant::Upper,
        }
    }
}

#[derive(Args)]
struct ProjectArgs {
    /// Point set file; otherwise the set from --config.
    #[arg(long)]
    set: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    /// Number of subspaces.
    #[arg(long)]
    subspaces: Option<usize>,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err.root() {
            Error::ResourceLimit { .. } => EXIT_RESOURCE,
            Error::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Error::from(err).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Error::from(err).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Generate { generator } => cmd_generate(cli, generator),
        Command::Capacity(args) => cmd_capacity(cli, args),
        Command::Boxcount(args) => cmd_boxcount(cli, args),
        Command::Profile(args) => cmd_profile(cli, args),
        Command::ProjectExperiment(args) => cmd_project(cli, args),
        Command::Verify { suite } => cmd_verify(cli, suite),
    }
}

fn point_cap(cli: &Cli) -> usize {
    cli.point_cap.unwrap_or(DEFAULT_POINT_CAP)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// The config file as JSON, or an empty object.
fn load_config(cli: &Cli) -> Result<Value, Failure> {
    match &cli.config {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(json!({})),
    }
}

fn config_as<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, Failure> {
    serde_json::from_value(value).map_err(|e| usage(format!("bad config: {e}")))
}

fn read_set(cli: &Cli, path: &Path) -> Result<PointSet, Failure> {
    let e = PointSet::read_file(path)?;
    let cap = point_cap(cli);
    if e.len() > cap {
        return Err(Error::ResourceLimit {
            what: "input points",
            requested: e.len(),
            cap,
        }
        .into());
    }
    Ok(e)
}

fn report_outcome(report: &ExperimentReport) -> u8 {
    if report.pass {
        0
    } else {
        EXIT_NUMERICAL
    }
}

fn cmd_generate(cli: &Cli, generator: &Generator) -> Outcome {
    let cap = point_cap(cli);
    let e = match generator {
        Generator::Cantor { ratio, depth } => generate_ifs(&cantor_spec(*ratio, *depth)?, cap)?,
        Generator::Sierpinski { depth } => generate_ifs(&sierpinski_spec(*depth), cap)?,
        Generator::Segment { points } => {
            if *points > cap {
                return Err(Error::ResourceLimit {
                    what: "segment points",
                    requested: *points,
                    cap,
                }
                .into());
            }
            PointSet::unit_segment(*points)?
        }
        Generator::Product { a, b } => product_set(&read_set(cli, a)?, &read_set(cli, b)?, cap)?,
        Generator::Ifs { spec } => {
            let spec = serde_json::from_str(&fs::read_to_string(spec)?)?;
            generate_ifs(&spec, cap)?
        }
    };
    let json_out = match (cli.format, &cli.out) {
        (Some(f), _) => f == Format::Json,
        (None, Some(p)) => p.extension().is_some_and(|x| x == "json"),
        (None, None) => false,
    };
    let text = if json_out {
        with_newline(e.to_json()?)
    } else {
        e.to_csv()
    };
    emit(cli.out.as_deref(), &text)?;
    eprintln!(
        "points: {}  diameter: {}  min gap: {}",
        e.len(),
        e.diameter(),
        e.min_gap()
    );
    Ok(0)
}

fn cmd_capacity(cli: &Cli, args: &CapacityArgs) -> Outcome {
    let e = read_set(cli, &args.set)?;
    let mut opts: SolverOptions = config_as(load_config(cli)?)?;
    opts.point_cap = point_cap(cli);
    if let Some(t) = args.tol {
        opts.tol = t;
    }
    if let Some(m) = args.max_iter {
        opts.max_iter = m;
    }
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let family = match args.kernel {
        Kernel::Phi => KernelFamily::Phi,
        Kernel::Psi => KernelFamily::Psi,
    };
    let spec = KernelSpec::new(family, args.s, args.r)?;
    let res = solve_equilibrium(&e, &spec, &opts)?;
    let summary = res.summary(args.r, args.s);
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => with_newline(serde_json::to_string_pretty(&summary)?),
        Format::Csv => format!(
            "r,s,capacity,min_energy,kkt_residual,iterations,converged,support_size\n{},{},{},{},{},{},{},{}\n",
            summary.r,
            summary.s,
            summary.capacity,
            summary.min_energy,
            summary.kkt_residual,
            summary.iterations,
            summary.converged,
            summary.support_size
        ),
    };
    emit(cli.out.as_deref(), &text)?;
    if let Some(p) = &args.dump_weights {
        let mut csv = String::from("index,weight\n");
        for (i, w) in res.equilibrium.weights().iter().enumerate() {
            csv.push_str(&format!("{i},{w}\n"));
        }
        fs::write(p, csv)?;
    }
    if !res.converged {
        eprintln!(
            "error: solver did not certify the equilibrium (kkt residual {:e} after {} iterations)",
            res.kkt_residual, res.iterations
        );
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

fn cmd_boxcount(cli: &Cli, args: &BoxcountArgs) -> Outcome {
    let e = read_set(cli, &args.set)?;
    let opts: ProfileOptions = config_as(load_config(cli)?)?;
    let window = args.window.unwrap_or(opts.window);
    let grid = if args.r.is_empty() {
        default_r_grid(&e, &opts)?
    } else {
        args.r.clone()
    };
    let counts = count_curve(&e, &grid)?;
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = format!("{}\n", BoxCountResult::csv_header());
            for c in &counts {
                s.push_str(&c.csv_row());
                s.push('\n');
            }
            s
        }
        Format::Json => {
            let curve: Vec<(f64, f64)> = counts.iter().map(|c| (c.r, c.count as f64)).collect();
            let fit = fit_scaling(&curve, window).ok();
            with_newline(serde_json::to_string_pretty(&json!({ "counts": counts, "fit": fit }))?)
        }
    };
    emit(cli.out.as_deref(), &text)?;
    Ok(0)
}

/// Parse `start:step:stop` into an inclusive grid.
fn parse_range(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("bad grid `{spec}`: {e}")))?;
    let [start, step, stop] = parts[..] else {
        return Err(usage(format!("grid `{spec}` must be start:step:stop")));
    };
    if !(step > 0.0 && start <= stop) {
        return Err(usage(format!("grid `{spec}` needs step > 0 and start <= stop")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + step * k as f64).collect())
}

fn cmd_profile(cli: &Cli, args: &ProfileArgs) -> Outcome {
    let e = read_set(cli, &args.set)?;
    let mut opts: ProfileOptions = config_as(load_config(cli)?)?;
    opts.solver.point_cap = point_cap(cli);
    if let Some(w) = args.window {
        opts.window = w;
    }
    let mut s_grid = args.s.clone();
    if let Some(spec) = &args.s_grid {
        s_grid.extend(parse_range(spec)?);
    }
    if s_grid.is_empty() {
        s_grid = parse_range("0.25:0.25:2")?;
    }
    s_grid.sort_by(f64::total_cmp);
    s_grid.dedup();
    let r_grid = if args.r.is_empty() {
        default_r_grid(&e, &opts)?
    } else {
        args.r.clone()
    };
    if r_grid.is_empty() {
        return Err(usage("the set has no admissible scales above the gap floor; pass --r"));
    }
    let tol = args.tol.unwrap_or(DEFAULT_INEQUALITY_TOL);
    let variant: SlopeVariant = args.variant.map(Into::into).unwrap_or_default();
    let set_id = args.set.display().to_string();
    let config = json!({
        "set": set_id,
        "s_grid": s_grid,
        "r_grid": r_grid,
        "tol": tol,
        "variant": variant,
        "profile": opts,
    });

    let mut estimates = Vec::with_capacity(s_grid.len());
    let mut failure = None;
    for &s in &s_grid {
        match estimate_profile(&e, s, &r_grid, &opts) {
            Ok(fit) => estimates.push(fit),
            Err(err) => {
                failure = Some((s, Failure::from(err)));
                break;
            }
        }
    }
    let done = estimates.len();
    let curve = ProfileCurve::new(
        set_id.clone(),
        e.ambient_dim(),
        s_grid[..done].to_vec(),
        r_grid.clone(),
        estimates,
    );
    let (curve, inequalities) = match curve {
        Ok(c) if failure.is_none() && c.s_grid.len() >= 3 => {
            let rep = verify_inequalities(&c, tol, variant)?;
            (Some(c), Some(rep))
        }
        Ok(c) => (Some(c), None),
        Err(_) => (None, None),
    };
    let mut violations: Vec<Value> = inequalities
        .iter()
        .flat_map(|r| r.violations.iter())
        .map(|v| json!({ "kind": "inequality", "detail": v }))
        .collect();
    if let Some((s, f)) = &failure {
        violations.push(json!({ "kind": "solver_failure", "detail": { "s": s, "message": f.message } }));
    }
    let report = ExperimentReport {
        experiment_id: "profile".into(),
        config,
        results: json!({ "curve": curve, "inequalities": inequalities }),
        pass: violations.is_empty(),
        violations,
    };
    let json_text = with_newline(report.to_json()?);
    let csv_text = curve.as_ref().map(|c| c.to_csv()).unwrap_or_default();
    match (cli.format.unwrap_or(Format::Json), &cli.out) {
        (Format::Json, None) => emit(None, &json_text)?,
        (Format::Csv, None) => emit(None, &csv_text)?,
        (Format::Json, Some(p)) => {
            emit(Some(p), &json_text)?;
            emit(Some(&p.with_extension("csv")), &csv_text)?;
        }
        (Format::Csv, Some(p)) => {
            emit(Some(p), &csv_text)?;
            emit(Some(&p.with_extension("json")), &json_text)?;
        }
    }
    if let Some((s, f)) = failure {
        eprintln!("error: profile stopped at s = {s}: {}", f.message);
        return Ok(f.code);
    }
    Ok(report_outcome(&report))
}

fn cmd_project(cli: &Cli, args: &ProjectArgs) -> Outcome {
    let mut cfg: ProjectConfig = config_as(load_config(cli)?)?;
    if let Some(p) = &args.set {
        cfg.set = SetSpec::File {
            path: p.display().to_string(),
        };
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(k) = args.subspaces {
        cfg.subspaces = k;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(cap) = cli.point_cap {
        cfg.point_cap = cap;
        cfg.profile.solver.point_cap = cap;
    }
    let report = run_project(&cfg)?;
    write_report(cli, &report, project_csv)?;
    Ok(report_outcome(&report))
}

fn project_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("index,slope_ols,slope_lower,slope_upper\n");
    if let Some(rows) = report.results["projections"].as_array() {
        for p in rows {
            let f = &p["fit"];
            s.push_str(&format!(
                "{},{},{},{}\n",
                p["index"], f["slope_ols"], f["slope_lower"], f["slope_upper"]
            ));
        }
    }
    s
}

/// JSON report to `--out` (or stdout), with a CSV rendering alongside when
/// writing to a file. `--format csv` swaps the roles.
fn write_report(cli: &Cli, report: &ExperimentReport, csv: fn(&ExperimentReport) -> String) -> Result<(), Failure> {
    let json_text = with_newline(report.to_json()?);
    match (cli.format.unwrap_or(Format::Json), &cli.out) {
        (Format::Json, None) => emit(None, &json_text),
        (Format::Csv, None) => emit(None, &csv(report)),
        (Format::Json, Some(p)) => {
            emit(Some(p), &json_text)?;
            emit(Some(&p.with_extension("csv")), &csv(report))
        }
        (Format::Csv, Some(p)) => {
            emit(Some(p), &csv(report))?;
            emit(Some(&p.with_extension("json")), &json_text)
        }
    }
}

/// Flattened `key,value` view of the report's headline numbers.
fn summary_csv(report: &ExperimentReport) -> String {
    format!(
        "experiment_id,pass,violations\n{},{},{}\n",
        report.experiment_id,
        report.pass,
        report.violations.len()
    )
}

fn cmd_verify(cli: &Cli, suite: &str) -> Outcome {
    if !SUITES.contains(&suite) {
        return Err(usage(format!(
            "unknown suite `{suite}`; expected one of {}",
            SUITES.join(", ")
        )));
    }
    let config = load_config(cli)?;
    let cap = cli.point_cap;
    let report = match suite {
        "capacity-boxcount" => {
            let mut cfg: CapacityBoxcountConfig = config_as(config)?;
            if let Some(c) = cap {
                cfg.point_cap = c;
                cfg.profile.solver.point_cap = c;
            }
            run_capacity_boxcount(&cfg)?
        }
        "psi-phi" => run_psi_phi(&config_as::<PsiPhiConfig>(config)?)?,
        "tube" => {
            let mut cfg: TubeConfig = config_as(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            run_tube(&cfg)?
        }
        _ => {
            let mut cfg: InequalitiesConfig = config_as(config)?;
            if let Some(c) = cap {
                cfg.point_cap = c;
                cfg.profile.solver.point_cap = c;
            }
            run_inequalities(&cfg)?
        }
    };
    write_report(cli, &report, summary_csv)?;
    Ok(report_outcome(&report))
}

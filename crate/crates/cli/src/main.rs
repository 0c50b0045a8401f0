//! `kirlab`: solve, certify and explore nonlocal Kirchhoff problems from an
//! INI configuration file.
//!
//! Exit codes: 0 success, 1 negative result (inconclusive certificate or
//! empty admissible set), 2 configuration or input error, 3 numerical failure.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use kirchhoff_lab::certify::torsion_coefficient;
use kirchhoff_lab::eigen::{eigen_curve, logspace};
use kirchhoff_lab::format::{fmt_f64, json_f64};
use kirchhoff_lab::{
    certify, CertifyError, EigenError, Grid, NonlocalSolution, Problem, ScalarField, ScanOptions, SolveError,
};
use serde_json::{json, Value};
use thiserror::Error;

use config::{parse_list, Config, ConfigError, Method};

#[derive(Parser)]
#[command(name = "kirlab", version, about = "Numerical laboratory for nonlocal Kirchhoff problems")]
struct Cli {
    /// INI configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] directory`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress the summary on standard output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find every solution by the fixed-point scan (or Newton)
    Solve,
    /// Check the uniqueness criteria for c = a/b
    Certify,
    /// Principal eigenvalue curve of the weighted problem for c = a/b
    Eigen {
        /// Comma-separated levels; overrides `[eigen] alphas`
        #[arg(long, allow_hyphen_values = true)]
        alphas: Option<String>,
    },
    /// Count solutions as the data h is scaled
    ScanStudy {
        /// Comma-separated scale factors; overrides `[study] scales`
        #[arg(long, allow_hyphen_values = true)]
        scales: Option<String>,
    },
    /// Write the torsion-based coefficient with D ≥ 0
    Example,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NonPositiveCoefficient { .. }
            | SolveError::GridMismatch
            | SolveError::TooFewSamples(_)
            | SolveError::BadBracket(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::NonPositiveC { .. }
            | CertifyError::NonPositiveCoefficient { .. }
            | CertifyError::GridMismatch
            | CertifyError::BadAlpha(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<EigenError> for CliError {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::NonPositiveC { .. } | EigenError::BadAlpha(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Successful run; `negative` selects exit code 1.
struct Outcome {
    negative: bool,
    summary: String,
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |source| CliError::Io { path: path.clone(), source };
        let mut out = BufWriter::new(fs::File::create(&path).map_err(io)?);
        f(&mut out).and_then(|_| out.flush()).map_err(io)
    }

    fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }

    fn json(&self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        self.text(name, &text)
    }

    fn field(&self, name: &str, field: &ScalarField) -> Result<(), CliError> {
        self.write(name, |w| field.write_to(w))
    }
}

fn grid_json(g: &Grid) -> Value {
    json!({
        "nx": g.nx(),
        "ny": g.ny(),
        "x0": json_f64(g.x0()),
        "y0": json_f64(g.y0()),
        "lx": json_f64(g.lx()),
        "ly": json_f64(g.ly()),
    })
}

fn root_json(r: &NonlocalSolution) -> Value {
    json!({ "s": json_f64(r.s), "residual": json_f64(r.residual), "method": r.method.tag() })
}

fn load(cli: &Cli) -> Result<(Config, Output), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Input("--config is required".into()))?;
    let config = Config::load(path)?;
    let dir = cli.out.clone().unwrap_or_else(|| config.directory.clone());
    Ok((config, Output::new(dir)?))
}

fn problem(config: &Config) -> Result<Problem, CliError> {
    let (a, b, h) = (config.coefficient("a")?, config.coefficient("b")?, config.coefficient("h")?);
    Ok(Problem::new(a, b, h)?)
}

fn ratio(config: &Config) -> Result<ScalarField, CliError> {
    let (a, b) = (config.coefficient("a")?, config.coefficient("b")?);
    for (name, f) in [("a", &a), ("b", &b)] {
        if !(f.min() > 0.0) {
            return Err(CliError::Input(format!("coefficient `{name}` must be positive (min {})", f.min())));
        }
    }
    Ok(a.zip_map(&b, |a, b| a / b))
}

fn scan_options(config: &Config) -> ScanOptions {
    ScanOptions { n_samples: config.n_samples, s_max_override: config.s_max_override }
}

fn run_solve(cli: &Cli) -> Result<Outcome, CliError> {
    let (config, out) = load(cli)?;
    let p = problem(&config)?;
    let start = Instant::now();
    let mut note = String::new();
    let newton = match config.method {
        Method::Newton => match p.newton_solve(None, config.newton_tol) {
            Ok(sol) => Some(sol),
            Err(e) => {
                note = format!("newton failed ({e}); fell back to the scan\n");
                None
            }
        },
        Method::Scan => None,
    };
    let (s_max, roots, samples, tangencies) = match newton {
        Some(sol) => (p.s_upper_bound(), vec![sol], None, Vec::new()),
        None => {
            let report = p.fixed_point_scan(&scan_options(&config))?;
            (report.s_max, report.roots, Some(report.samples), report.suspected_tangencies)
        }
    };
    let runtime = start.elapsed().as_secs_f64();
    if roots.is_empty() {
        return Err(CliError::Numerical("scan found no fixed point".into()));
    }

    if config.formats.json {
        out.json(
            "solve.json",
            &json!({
                "grid": grid_json(&config.grid),
                "s_max": json_f64(s_max),
                "roots": roots.iter().map(root_json).collect::<Vec<_>>(),
                "suspected_tangencies": tangencies.iter().map(|&s| json_f64(s)).collect::<Vec<_>>(),
            }),
        )?;
        out.json("timing.json", &json!({ "runtime_seconds": runtime }))?;
    }
    if config.formats.csv {
        if let Some(samples) = &samples {
            let mut csv = String::from("s,phi_s\n");
            for &(s, phi) in samples {
                csv.push_str(&format!("{},{}\n", fmt_f64(s), fmt_f64(phi)));
            }
            out.text("scan_samples.csv", &csv)?;
        }
        let mut csv = String::from("index,s,residual,method\n");
        for (k, r) in roots.iter().enumerate() {
            csv.push_str(&format!("{k},{},{},{}\n", fmt_f64(r.s), fmt_f64(r.residual), r.method.tag()));
        }
        out.text("scan_roots.csv", &csv)?;
    }
    if config.formats.field {
        for (k, r) in roots.iter().enumerate() {
            out.field(&format!("root_{k}.field"), &r.u)?;
        }
    }

    let mut summary = note;
    summary.push_str(&format!("{} solution(s), S_max = {}\n", roots.len(), fmt_f64(s_max)));
    for (k, r) in roots.iter().enumerate() {
        summary.push_str(&format!("  root {k}: s = {}, residual = {}\n", fmt_f64(r.s), fmt_f64(r.residual)));
    }
    if !tangencies.is_empty() {
        summary.push_str(&format!("  suspected tangencies near s = {tangencies:?}\n"));
    }
    Ok(Outcome { negative: false, summary })
}

fn run_certify(cli: &Cli) -> Result<Outcome, CliError> {
    let (config, out) = load(cli)?;
    let cert = certify(&config.coefficient("a")?, &config.coefficient("b")?)?;
    out.json("certificate.json", &cert.to_json())?;
    Ok(Outcome {
        negative: !cert.verdict.is_unique(),
        summary: format!("{}: ratio = {}\n", cert.verdict, fmt_f64(cert.ratio_value)),
    })
}

fn run_eigen(cli: &Cli, alphas: Option<&str>) -> Result<Outcome, CliError> {
    let (config, out) = load(cli)?;
    let alphas = match alphas {
        Some(text) => parse_list("--alphas", text)?,
        None => config.alphas.clone().unwrap_or_else(|| logspace(1e-2, 1e2, 20)),
    };
    if let Some(a) = alphas.iter().find(|&&a| !(a > 0.0)) {
        return Err(CliError::Input(format!("alpha levels must be positive (got {a})")));
    }
    let c = ratio(&config)?;
    let curve = match eigen_curve(&c, &alphas) {
        Err(EigenError::ConstantC) => Default::default(),
        other => other?,
    };
    if curve.is_empty() {
        return Ok(Outcome { negative: true, summary: "admissible set empty\n".into() });
    }
    out.text("eigen_curve.csv", &curve.to_csv())?;
    if config.write_fields {
        for (k, pair) in curve.pairs.iter().enumerate() {
            out.field(&format!("eigenfunction_{k}.field"), &pair.u)?;
        }
    }
    let mut summary = format!("{} of {} levels admissible\n", curve.rows.len(), alphas.len());
    for r in &curve.rows {
        summary.push_str(&format!("  alpha = {}: lambda = {}\n", fmt_f64(r.alpha), fmt_f64(r.lambda)));
    }
    Ok(Outcome { negative: false, summary })
}

fn run_scan_study(cli: &Cli, scales: Option<&str>) -> Result<Outcome, CliError> {
    let (config, out) = load(cli)?;
    let scales = match scales {
        Some(text) => parse_list("--scales", text)?,
        None => config.scales.clone().ok_or_else(|| ConfigError::Missing("study.scales".into()))?,
    };
    let p = problem(&config)?;
    let opts = scan_options(&config);
    let mut csv = String::from("k,n_roots,s_values\n");
    let mut summary = String::new();
    for &k in &scales {
        let report = p.with_scaled_data(k).fixed_point_scan(&opts)?;
        let s: Vec<String> = report.roots.iter().map(|r| fmt_f64(r.s)).collect();
        csv.push_str(&format!("{},{},{}\n", fmt_f64(k), report.roots.len(), s.join(";")));
        summary.push_str(&format!("k = {}: {} root(s)\n", fmt_f64(k), report.roots.len()));
    }
    out.text("scan_study.csv", &csv)?;
    Ok(Outcome { negative: false, summary })
}

fn run_example(cli: &Cli) -> Result<Outcome, CliError> {
    let (grid, dir) = match &cli.config {
        Some(path) => {
            let config = Config::load(path)?;
            (config.grid, config.directory)
        }
        None => (Grid::unit_square(64), PathBuf::from("out")),
    };
    let out = Output::new(cli.out.clone().unwrap_or(dir))?;
    let c = torsion_coefficient(grid)?;
    out.field("example_c.field", &c)?;
    Ok(Outcome {
        negative: false,
        summary: format!("wrote {} (min {}, max {})\n", path_str(&out.dir.join("example_c.field")), c.min(), c.max()),
    })
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve => run_solve(&cli),
        Command::Certify => run_certify(&cli),
        Command::Eigen { alphas } => run_eigen(&cli, alphas.as_deref()),
        Command::ScanStudy { scales } => run_scan_study(&cli, scales.as_deref()),
        Command::Example => run_example(&cli),
    };
    match result {
        Ok(outcome) => {
            if outcome.negative {
                eprint!("{}", outcome.summary);
                ExitCode::from(1)
            } else {
                if !cli.quiet {
                    print!("{}", outcome.summary);
                }
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use gperiodic::bounds::{run_scenario, BoundReport, Scenario};
use gperiodic::cell::{build_cell, check_recollement, neumann_spectrum, CellSpec, CellTemplate};
use gperiodic::eigen::EigenOptions;
use gperiodic::graph::{mu0_estimate, GraphFamily};
use gperiodic::tube::{g_inf_profile, harmonic_solve_tube, TubeDerived, TubeProfile};
use gperiodic::Error;

const EXIT_VERDICT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "gperiodic", version, about = "Spectral bounds for periodic gluings of weighted cells")]
struct Cli {
    /// Input file (scenario TOML, cell TOML/JSON, tube JSON or report JSON).
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Solver or convergence tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Largest graph depth (graph: default 12; run: caps scenario depths).
    #[arg(long, global = true)]
    max_depth: Option<usize>,
    /// Seed of the eigensolver start block.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; results go to standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Standard-output format; with --out both files are written.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Tree,
    Lattice,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CellKind {
    Interval,
    Star,
    BalancedComb,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate μ₀ and the Cheeger constant on growing balls.
    Graph {
        #[arg(long, value_enum, default_value_t = FamilyArg::Tree)]
        family: FamilyArg,
        #[arg(long, default_value_t = 3)]
        valence: usize,
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        #[arg(long, default_value_t = 2)]
        min_depth: usize,
    },
    /// Spectrum of a cell given by --config or by the inline flags.
    Cell {
        #[arg(long, value_enum, default_value_t = CellKind::BalancedComb)]
        kind: CellKind,
        #[arg(long, default_value_t = 3)]
        valence: usize,
        #[arg(long, default_value_t = 0.025)]
        mesh_step: f64,
    },
    /// Derived tube quantities and the harmonic-energy comparison.
    Tube {
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        q: f64,
        /// Depth R₀ (defaults to R).
        #[arg(long)]
        r0: Option<f64>,
    },
    /// Run scenario files, in parallel when several are given.
    Run,
    /// Render report JSON files as CSV plot data.
    Report,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } | Error::LinearSolve { .. } => EXIT_SOLVER,
            Error::Io(_)
            | Error::Json(_)
            | Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::EdgeList { .. }
            | Error::Cell(_)
            | Error::Tube(_) => {
                EXIT_USAGE
            }
            _ => EXIT_VERDICT,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// With `--out`, writes `<name>.json` and, when a table exists, `<name>.csv`.
/// Without it, prints the format chosen by `--format`.
fn emit(cli: &Cli, name: &str, json_text: &str, csv_text: Option<&str>) -> Result<(), Failure> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            let mut files = vec![("json", json_text)];
            if let Some(c) = csv_text {
                files.push(("csv", c));
            }
            for (ext, body) in files {
                let path = dir.join(format!("{name}.{ext}"));
                fs::write(&path, body).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                eprintln!("wrote {}", path.display());
            }
        }
        None => match (cli.format, csv_text) {
            (Format::Csv, Some(c)) => print_stdout(c),
            _ => print_stdout(json_text),
        },
    }
    Ok(())
}

/// Writes to standard output, treating a closed pipe as a normal end.
fn print_stdout(body: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(body.as_bytes());
    if !body.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn single_config(cli: &Cli) -> Result<Option<&PathBuf>, Failure> {
    match cli.config.len() {
        0 => Ok(None),
        1 => Ok(cli.config.first()),
        _ => Err(usage("this subcommand takes a single --config")),
    }
}

fn cmd_graph(cli: &Cli, family: FamilyArg, valence: usize, dimension: usize, min_depth: usize) -> Result<u8, Failure> {
    let fam = match family {
        FamilyArg::Tree => GraphFamily::Tree { valence },
        FamilyArg::Lattice => GraphFamily::Lattice { dimension },
    };
    let max = cli.max_depth.unwrap_or(12);
    if min_depth < 1 || max < min_depth {
        return Err(usage(format!("depth range {min_depth}..={max} is empty")));
    }
    let depths: Vec<usize> = (min_depth..=max).collect();
    let opts = EigenOptions { seed: cli.seed.unwrap_or(EigenOptions::default().seed), ..EigenOptions::default() };
    let consts = mu0_estimate(&fam, &depths, cli.tol.unwrap_or(1e-6), &opts)?;
    let mut csv = String::from("depth,mu0,cheeger_sweep,folner\n");
    for (i, d) in consts.depths.iter().enumerate() {
        csv.push_str(&format!(
            "{d},{},{},{}\n",
            consts.mu0_estimates[i], consts.cheeger_estimates[i], consts.folner_ratio[i]
        ));
    }
    let body = serde_json::to_string_pretty(&consts).map_err(Error::from)?;
    emit(cli, &format!("graph_{}", fam.name()), &body, Some(&csv))?;
    Ok(0)
}

fn cmd_cell(cli: &Cli, kind: CellKind, valence: usize, mesh_step: f64) -> Result<u8, Failure> {
    let spec = match single_config(cli)? {
        Some(path) => {
            let text = read(path)?;
            let t = if path.extension().is_some_and(|e| e == "json") {
                CellTemplate::from_json(&text)?
            } else {
                CellTemplate::from_toml(&text)?
            };
            t.to_spec()
        }
        None => match kind {
            CellKind::Interval => CellSpec::interval(1.0, gperiodic::cell::WeightFamily::unit(), mesh_step),
            CellKind::Star => CellSpec::star(valence, 0.5, gperiodic::cell::WeightFamily::unit(), mesh_step),
            CellKind::BalancedComb => CellSpec::balanced_comb(valence, mesh_step),
        },
    };
    let mesh = build_cell(&spec)?;
    let s = neumann_spectrum(&mesh, 4.min(mesh.free_nodes().len()).max(2), cli.tol.unwrap_or(1e-10))?;
    let rec = check_recollement(&mesh, &s, 1e-8);
    let body = serde_json::to_string_pretty(&json!({
        "nodes": mesh.num_nodes(),
        "transitions": mesh.valence(),
        "volume": mesh.volume(),
        "lambda0": s.lambda0,
        "lambda1": s.lambda1,
        "eta": s.eta,
        "values": s.values,
        "phi0_at_transitions": s.phi0_at_transitions,
        "max_residual": s.max_residual,
        "recollement": rec,
    }))
    .map_err(Error::from)?;
    let mut csv = String::from("index,eigenvalue\n");
    for (i, v) in s.values.iter().enumerate() {
        csv.push_str(&format!("{i},{v}\n"));
    }
    emit(cli, "cell", &body, Some(&csv))?;
    Ok(if rec.ok { 0 } else { EXIT_VERDICT })
}

fn cmd_tube(cli: &Cli, p: f64, q: f64, r0: Option<f64>) -> Result<u8, Failure> {
    let path = single_config(cli)?.ok_or_else(|| usage("tube needs --config <profile.json>"))?;
    let profile = TubeProfile::from_json(&read(path)?)?;
    let d = TubeDerived::from_profile(&profile);
    let r0 = r0.unwrap_or(profile.r_max());
    let ginf = g_inf_profile(&d, p, q, r0)?;
    let sol = harmonic_solve_tube(&profile, p, q, r0)?;
    let tol = cli.tol.unwrap_or(1e-6);
    let holds = sol.energy >= ginf.energy - tol;
    let body = serde_json::to_string_pretty(&json!({
        "derived": d,
        "g_inf_energy": ginf.energy,
        "g_t_energy": sol.energy,
        "solve_residual": sol.residual,
        "comparison_holds": holds,
    }))
    .map_err(Error::from)?;
    let mut csv = String::from("r,theta_inf,u_inf,volume\n");
    for (j, r) in d.radii().iter().enumerate() {
        csv.push_str(&format!("{r},{},{},{}\n", d.theta_inf[j], d.u_inf[j], d.volume[j]));
    }
    emit(cli, "tube", &body, Some(&csv))?;
    Ok(if holds { 0 } else { EXIT_VERDICT })
}

fn cmd_run(cli: &Cli) -> Result<u8, Failure> {
    if cli.config.is_empty() {
        return Err(usage("run needs at least one --config <scenario.toml>"));
    }
    let mut scenarios = Vec::new();
    for path in &cli.config {
        let mut s = Scenario::from_file(path).map_err(|e| match e {
            Error::Io(_) => usage(format!("{}: {e}", path.display())),
            other => usage(other.to_string()),
        })?;
        if let Some(d) = cli.max_depth {
            s.limit_depth(d);
        }
        if let Some(t) = cli.tol {
            s.tolerances.solver = t;
        }
        if let Some(seed) = cli.seed {
            s.seed = seed;
        }
        scenarios.push(s);
    }
    let results: Vec<_> = scenarios.par_iter().map(run_scenario).collect();
    let mut code = 0u8;
    for (s, r) in scenarios.iter().zip(results) {
        let report = match r {
            Ok(rep) => rep,
            Err(e) => {
                eprintln!("{}: {e}", s.name);
                let f = Failure::from(e.error);
                code = worst(code, f.code);
                let body = serde_json::to_string_pretty(&*e.partial).map_err(Error::from)?;
                emit(cli, &s.name, &body, None)?;
                continue;
            }
        };
        for v in &report.verdicts {
            eprintln!(
                "{}: {} {} (lhs {:.6e}, rhs {:.6e})",
                s.name,
                if v.passed { "PASS" } else { "FAIL" },
                v.name,
                v.lhs,
                v.rhs
            );
        }
        if !report.passed {
            code = worst(code, EXIT_VERDICT);
        }
        let body = serde_json::to_string_pretty(&report).map_err(Error::from)?;
        emit(cli, &s.name, &body, Some(&report.to_csv()))?;
    }
    Ok(code)
}

/// Usage errors dominate solver failures, which dominate verdict failures.
fn worst(a: u8, b: u8) -> u8 {
    let rank = |c: u8| match c {
        EXIT_USAGE => 3,
        EXIT_SOLVER => 2,
        EXIT_VERDICT => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn cmd_report(cli: &Cli) -> Result<u8, Failure> {
    if cli.config.is_empty() {
        return Err(usage("report needs --config <report.json>"));
    }
    for path in &cli.config {
        let report: BoundReport =
            serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        let csv = report.to_csv();
        match &cli.out {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| usage(e.to_string()))?;
                let target = dir.join(format!("{stem}.csv"));
                fs::write(&target, csv).map_err(|e| usage(e.to_string()))?;
                eprintln!("wrote {}", target.display());
            }
            None => print_stdout(&csv),
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Graph { family, valence, dimension, min_depth } => {
            cmd_graph(&cli, *family, *valence, *dimension, *min_depth)
        }
        Command::Cell { kind, valence, mesh_step } => cmd_cell(&cli, *kind, *valence, *mesh_step),
        Command::Tube { p, q, r0 } => cmd_tube(&cli, *p, *q, *r0),
        Command::Run => cmd_run(&cli),
        Command::Report => cmd_report(&cli),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

//! Command line front end: single solves, convergence studies, adaptive runs,
//! mesh export and the geometry self-check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use surfem::geometry::manufactured;
use surfem::geometry::properties::run_property_suite;
use surfem::harness::{check_rates, parse_levels, run_adaptive, run_convergence, solve_level, Method, RunConfig};
use surfem::mesh::{extract_band, extract_cut_surface, io};
use surfem::narrowband::delta_window;
use surfem::{Error, ImplicitSurface, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_THRESHOLD: u8 = 4;

/// Samples per surface for `check-geometry`.
const GEOMETRY_SAMPLES: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "surfem", version, about = "Finite element solvers for the Laplace-Beltrami equation on closed surfaces")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// parametric, trace, narrowband or adaptive; overrides the configuration.
    #[arg(long, global = true)]
    method: Option<String>,
    /// `a..b` (inclusive) or `a,b,c`; overrides the configuration.
    #[arg(long, global = true)]
    levels: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve at the finest configured level and print the error report.
    Solve,
    /// Run every level and print the convergence table.
    Converge {
        /// Exit with status 4 unless the reference rate windows are met.
        #[arg(long)]
        assert: bool,
    },
    /// Run the adaptive loop and print its history.
    Adapt,
    /// Write the discrete domain of the finest level (OFF and VTK).
    ExportMesh,
    /// Run the randomized distance-function identities.
    CheckGeometry,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let method = cli.method.as_deref().map(str::parse::<Method>).transpose()?;
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_for(method.unwrap_or(Method::Parametric)),
    };
    if let Some(method) = method {
        if method != config.method {
            // levels of the other family (surface vs bulk) make no sense
            if method.uses_surface_levels() != config.method.uses_surface_levels() {
                config.levels = RunConfig::default_for(method).levels;
            }
            config.method = method;
        }
    }
    if config.method == Method::Adaptive && config.levels.len() > 1 {
        config.levels.truncate(1);
    }
    if let Some(levels) = &cli.levels {
        config.levels = parse_levels(levels)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn solve(config: &RunConfig) -> Result<u8> {
    let level = *config.levels.last().expect("validated levels are nonempty");
    let report = solve_level(config, level)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(dir) = &config.output {
        write_file(dir, "solve.json", &(text + "\n"))?;
    }
    Ok(0)
}

fn converge(config: &RunConfig, assert: bool) -> Result<u8> {
    let table = run_convergence(config)?;
    print!("{}", table.to_csv()?);
    if !assert {
        return Ok(0);
    }
    let mut failed = false;
    for check in check_rates(&table) {
        let status = if check.passed { "PASS" } else { "FAIL" };
        eprintln!(
            "{status} {}: {:?} in [{}, {}]",
            check.quantity, check.observed, check.window.0, check.window.1
        );
        failed |= !check.passed;
    }
    Ok(if failed { EXIT_THRESHOLD } else { 0 })
}

fn adapt(config: &RunConfig) -> Result<u8> {
    let mut config = config.clone();
    config.method = Method::Adaptive;
    config.levels.truncate(1);
    let history = run_adaptive(&config)?;
    let csv = history.to_csv()?;
    print!("{csv}");
    if let Some(dir) = &config.output {
        write_file(dir, "adapt.csv", &csv)?;
        let mesh = &history.final_mesh;
        write_file(dir, "adapt_final.off", &io::to_off(&mesh.vertices, &mesh.triangles))?;
    }
    Ok(0)
}

fn export_mesh(config: &RunConfig) -> Result<u8> {
    let dir = config
        .output
        .clone()
        .ok_or_else(|| Error::Config("export-mesh needs --out".into()))?;
    let level = *config.levels.last().expect("validated levels are nonempty");
    let surface = config.surface;
    match config.method {
        Method::Parametric | Method::Adaptive => {
            let mesh = config.surface_mesh(level)?;
            write_file(&dir, "surface.off", &io::to_off(&mesh.vertices, &mesh.triangles))?;
        }
        Method::Trace => {
            let bulk = config.bulk_mesh(level)?;
            let cut = extract_cut_surface(&bulk, &surface)?;
            write_file(&dir, "cut.off", &io::to_off(&cut.vertices, &cut.faces))?;
            let tets: Vec<[usize; 4]> = cut.cut_tets.iter().map(|&t| bulk.tets[t]).collect();
            let vtk = io::to_vtk("cut tets", &bulk.vertices, &tets, Some(("d_h", &cut.nodal_distance)));
            write_file(&dir, "cut_tets.vtk", &vtk)?;
        }
        Method::Narrowband => {
            let bulk = config.bulk_mesh(level)?;
            let delta = config.delta_ratio * bulk.h;
            let (lower, upper) = delta_window(&surface, bulk.h);
            if !(delta >= lower && delta <= upper) {
                return Err(Error::BandWidth { delta, lower, upper });
            }
            let band = extract_band(&bulk, &surface, delta)?;
            let tets: Vec<[usize; 4]> = band.tets.iter().map(|&t| bulk.tets[t]).collect();
            let vtk = io::to_vtk("band tets", &bulk.vertices, &tets, Some(("d_h", &band.nodal_distance)));
            write_file(&dir, "band.vtk", &vtk)?;
        }
    }
    println!("wrote mesh files to {}", dir.display());
    Ok(0)
}

fn check_geometry(config: &RunConfig, explicit: bool) -> Result<u8> {
    let surfaces = if explicit {
        vec![config.surface]
    } else {
        vec![
            ImplicitSurface::sphere(1.0)?,
            ImplicitSurface::torus(2.0, 0.5)?,
            ImplicitSurface::ellipsoid(1.3, 1.0, 0.8)?,
        ]
    };
    let mut failed = false;
    let mut reports = Vec::new();
    for surface in surfaces {
        manufactured(&surface)?;
        let report = run_property_suite(&surface, GEOMETRY_SAMPLES, config.seed)?;
        for (name, value, tol) in report.checks() {
            let status = if value < tol { "PASS" } else { "FAIL" };
            println!("{status} {:<10} {name:<30} {value:.3e} < {tol:.0e}", report.surface);
        }
        failed |= !report.passed();
        reports.push(report);
    }
    if let Some(dir) = &config.output {
        write_file(dir, "geometry.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    }
    Ok(if failed { EXIT_THRESHOLD } else { 0 })
}

fn run(cli: &Cli) -> Result<u8> {
    let config = resolve_config(cli)?;
    match &cli.command {
        Command::Solve => solve(&config),
        Command::Converge { assert } => converge(&config, *assert),
        Command::Adapt => adapt(&config),
        Command::ExportMesh => export_mesh(&config),
        Command::CheckGeometry => check_geometry(&config, cli.config.is_some()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rtiform::sim::{export, feasibility_report, run_with, ExportFormat, RunOptions, Scenario};
use rtiform::Error;

/// Leader-follower formation simulator for fixed-wing UAV swarms.
#[derive(Debug, Parser)]
#[command(name = "rtiform", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every follower's formation against the motion and speed constraints.
    Feasibility {
        scenario: PathBuf,
        /// Also write the report as CSV into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the closed-loop simulation and write the trajectory log.
    Simulate {
        scenario: PathBuf,
        /// Output directory; defaults to the scenario's, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Evaluate followers of one graph layer concurrently.
        #[arg(long)]
        parallel: bool,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Parse a scenario and check its structural invariants.
    Validate { scenario: PathBuf },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Integration step in seconds.
    #[arg(long)]
    step: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
    Both,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Svg => ExportFormat::Svg,
            Format::Both => ExportFormat::Both,
        }
    }
}

/// Failure that maps to a process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut message = e.to_string();
        if let Error::Runtime { .. } = e {
            message = format!("{message}\n  cause: {}", e.root());
        }
        Failure {
            code: e.exit_code() as u8,
            message,
        }
    }
}

fn load(path: &Path, overrides: Option<&Overrides>) -> Result<Scenario, Error> {
    let mut s = Scenario::load(path)?;
    if let Some(o) = overrides {
        if let Some(h) = o.step {
            s = s.with_step(h)?;
        }
        if let Some(t) = o.duration {
            s = s.with_duration(t)?;
        }
    }
    Ok(s)
}

fn feasibility(path: &Path, out: Option<&Path>, overrides: &Overrides) -> Result<(), Failure> {
    let scenario = load(path, Some(overrides))?;
    let report = feasibility_report(&scenario)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        let file = dir.join(format!("{}_feasibility.csv", scenario.name));
        report.write_csv(std::fs::File::create(&file).map_err(Error::from)?)?;
        println!("wrote {}", file.display());
    }
    if report.all_feasible() {
        Ok(())
    } else {
        let bad = report.rows.iter().filter(|r| !r.status.is_feasible()).count();
        Err(Failure {
            code: 2,
            message: format!("{bad} follower(s) have no admissible formation"),
        })
    }
}

fn simulate(
    path: &Path,
    out: Option<&Path>,
    overrides: &Overrides,
    parallel: bool,
    format: Format,
) -> Result<(), Failure> {
    let scenario = load(path, Some(overrides))?;
    let started = std::time::Instant::now();
    let log = run_with(&scenario, RunOptions { parallel })?;
    let elapsed = started.elapsed();
    let last = log.ticks() - 1;
    let final_error = log.tick(last)[1..].iter().map(|r| r.err_norm).fold(0.0, f64::max);
    println!(
        "{}: {} vehicles, {} ticks of {} s in {:.3} s; final max error {:.3e}",
        scenario.name,
        scenario.node_count(),
        log.ticks(),
        scenario.step,
        elapsed.as_secs_f64(),
        final_error
    );
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    for file in export(&log, &dir, &scenario.name, format.into())? {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let scenario = load(path, None)?;
    let layers = scenario.topology.layers();
    println!(
        "{}: valid {} scenario, {} follower(s) in {} layer(s), {} ticks",
        scenario.name,
        scenario.kind().label(),
        scenario.followers.len(),
        layers.len() - 1,
        scenario.steps()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Feasibility {
            scenario,
            out,
            overrides,
        } => feasibility(scenario, out.as_deref(), overrides),
        Command::Simulate {
            scenario,
            out,
            overrides,
            parallel,
            format,
        } => simulate(scenario, out.as_deref(), overrides, *parallel, *format),
        Command::Validate { scenario } => validate(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

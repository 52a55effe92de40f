use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uuvplan::env::EnvError;
use uuvplan::output::{self, OutputError};
use uuvplan::scenario::{echo, load_scenario, paper_baseline, Scenario, ScenarioError};

const EXIT_VALIDATION: u8 = 2;
const EXIT_MISSION: u8 = 3;
const EXIT_IO: u8 = 4;

/// Mission planner and simulator for an underwater vehicle touring a
/// drifting sensor network.
#[derive(Parser)]
#[command(name = "uuvplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the opening route only.
    Plan(Common),
    /// Fly one mission and write its artifacts.
    Run(Common),
    /// Run a batch of missions with consecutive seeds.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        trials: usize,
    },
    /// Sample the current field on a regular grid.
    FieldDump {
        #[command(flatten)]
        common: Common,
        /// Grid nodes per axis.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
    /// Print the validated scenario with every default filled in.
    Echo(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled baseline when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Master seed; the scenario's own seed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (a file path for field-dump).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation step, seconds.
    #[arg(long)]
    dt: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io(_) | ScenarioError::Env(EnvError::Io(_)) => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        match e {
            OutputError::Scenario(e) => e.into(),
            OutputError::Global(e) => Failure {
                code: EXIT_MISSION,
                message: e.to_string(),
            },
            OutputError::Io { .. } => Failure {
                code: EXIT_IO,
                message: e.to_string(),
            },
        }
    }
}

impl Common {
    fn scenario(&self) -> Result<Scenario, Failure> {
        let mut sc = match &self.scenario {
            Some(p) => load_scenario(p)?,
            None => paper_baseline(),
        };
        if let Some(dt) = self.dt {
            sc.mission.dt = dt;
            sc.validate()?;
        }
        Ok(sc)
    }

    fn seed(&self, sc: &Scenario) -> u64 {
        self.seed.unwrap_or(sc.seed)
    }

    fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("out"))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan(c) => {
            let sc = c.scenario()?;
            let seed = c.seed(&sc);
            let route = output::plan_once(&sc, seed, c.out.as_deref())?;
            print!("{}", output::route_text(&route, &sc.name, seed));
        }
        Command::Run(c) => {
            let sc = c.scenario()?;
            let seed = c.seed(&sc);
            let report = output::run_once(&sc, seed, c.out_dir())?;
            print!("{}", output::report_text(&report, &sc.name, seed));
            if !report.success {
                return Err(Failure {
                    code: EXIT_MISSION,
                    message: format!(
                        "mission failed: {}",
                        report.failure.as_deref().unwrap_or("unknown")
                    ),
                });
            }
        }
        Command::Montecarlo { common: c, trials } => {
            if trials == 0 {
                return Err(Failure {
                    code: EXIT_VALIDATION,
                    message: "--trials must be >= 1".into(),
                });
            }
            let sc = c.scenario()?;
            let seed = c.seed(&sc);
            let summary = output::run_monte_carlo(&sc, trials, seed, c.out_dir())?;
            print!("{}", output::summary_csv(&summary, &sc.name, seed));
        }
        Command::FieldDump { common: c, resolution } => {
            if resolution < 2 {
                return Err(Failure {
                    code: EXIT_VALIDATION,
                    message: "--resolution must be >= 2".into(),
                });
            }
            let sc = c.scenario()?;
            let seed = c.seed(&sc);
            let path = c.out.clone().unwrap_or_else(|| PathBuf::from("field.csv"));
            output::field_dump(&sc, seed, resolution, &path)?;
        }
        Command::Echo(c) => {
            let sc = c.scenario()?;
            print!("{}", echo(&sc));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

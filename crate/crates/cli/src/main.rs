use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aas_cli::config::ClauseConfig;
use aas_cli::error::{CliError, Result};
use aas_cli::generate::{generate, GeneratorSpec, Scenario};
use aas_cli::pipeline::{parallel_from_env, run_pipeline};
use aas_cli::report::{emit, Format, Report};
use aas_cli::session::{load_sessions, write_sessions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aas", version, about = "Score memory sessions, run clause audits and drift governance")]
struct Cli {
    /// Clause config file (TOML, or JSON with a .json extension) or a preset: none, all-clauses
    #[arg(long, global = true, default_value = "none")]
    config: String,

    /// Override the kernel epsilon
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Seed for generation and seeded audit probes
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[arg(long, global = true, value_enum, default_value_t = Format::JsonLines)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every session and run the enabled clauses
    Score {
        /// Session file, `-` for stdin
        #[arg(default_value = "-")]
        sessions: PathBuf,
    },
    /// Windowless, dedup and rate audits; exits 2 on any finding
    Audit {
        #[arg(default_value = "-")]
        sessions: PathBuf,
    },
    /// Write a synthetic session file
    Generate {
        #[arg(long, value_enum, default_value_t = Scenario::Appetition)]
        scenario: Scenario,
        #[arg(long, default_value_t = 6)]
        channels: usize,
        #[arg(long, default_value_t = 24)]
        steps: usize,
        /// Latent driver: give body channels their own maps
        #[arg(long)]
        distinct_maps: bool,
        /// Output path, stdout by default
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write planted clone groups as JSON to this path
        #[arg(long)]
        planted: Option<PathBuf>,
    },
    /// Windowed net-drift ledger and promote / rollback / hold verdict
    Govern {
        #[arg(default_value = "-")]
        sessions: PathBuf,
    },
    /// Re-render a JSON-lines report
    Report {
        #[arg(default_value = "-")]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn stdout_sink() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let load_config = || -> Result<ClauseConfig> {
        let mut c = ClauseConfig::load(&cli.config)?;
        if let Some(eps) = cli.epsilon {
            c.epsilon = Some(eps);
        }
        Ok(c)
    };
    let score = |path: &Path, config: ClauseConfig| -> Result<ExitCode> {
        let file = load_sessions(path)?;
        let plan = config.resolve(file.header.channels, file.header.epsilon, cli.seed)?;
        let report = run_pipeline(&file, &plan, parallel_from_env())?;
        emit(&report, cli.format, &mut stdout_sink()).map_err(|e| CliError::io("stdout", e))?;
        if report.passed() {
            Ok(ExitCode::SUCCESS)
        } else {
            let failed: Vec<&str> =
                report.checks.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            Err(CliError::Invariant(format!("checks failed: {}", failed.join(", "))))
        }
    };

    match &cli.command {
        Command::Score { sessions } => score(sessions, load_config()?),
        Command::Audit { sessions } => {
            let mut c = load_config()?;
            c.audit.enabled = true;
            c.dynamics.enabled = true;
            score(sessions, c)
        }
        Command::Govern { sessions } => {
            let mut c = load_config()?;
            c.teleology.enabled = true;
            score(sessions, c)
        }
        Command::Generate { scenario, channels, steps, distinct_maps, out, planted } => {
            let spec = GeneratorSpec {
                scenario: *scenario,
                channels: *channels,
                steps: *steps,
                seed: cli.seed,
                epsilon: cli.epsilon.unwrap_or(aas_core::KernelConfig::DEFAULT_EPSILON),
                shared_maps: !distinct_maps,
            };
            let g = generate(&spec)?;
            match out {
                Some(path) => {
                    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
                    write_sessions(BufWriter::new(f), &g.file).map_err(|e| CliError::io(path, e))?;
                }
                None => write_sessions(stdout_sink(), &g.file).map_err(|e| CliError::io("stdout", e))?,
            }
            if let Some(path) = planted {
                let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
                let text = serde_json::to_string(&g.planted).expect("serialisable");
                writeln!(f, "{text}").map_err(|e| CliError::io(path, e))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { report } => {
            let parsed = if report == Path::new("-") {
                Report::read(io::stdin().lock())?
            } else {
                let f = File::open(report).map_err(|e| CliError::io(report, e))?;
                Report::read(BufReader::new(f))?
            };
            emit(&parsed, cli.format, &mut stdout_sink()).map_err(|e| CliError::io("stdout", e))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

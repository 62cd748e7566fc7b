//! `workcell`: validate, run and replay workcell scenarios.

mod remote;

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use workcell_core::report::{export, run_headless, ExportFormat, MetricsReport, RunError};
use workcell_core::scenario::{self, Scenario};
use workcell_core::vcs::{replay, SessionLog};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONNECTION: u8 = 3;

#[derive(Parser)]
#[command(name = "workcell", version, about = "Shared-autonomy workcell scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file and list every problem.
    Validate { file: PathBuf },
    /// Run a scenario headlessly or against a live server.
    Run {
        file: PathBuf,
        /// Server address (host:port or ws:// URL); runs in-process when absent.
        #[arg(long)]
        connect: Option<String>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for the report and the session log.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Replay the recorded log locally and compare snapshot hashes.
        #[arg(long)]
        replay_check: bool,
    },
    /// Re-execute a session log against its scenario.
    Replay { log: PathBuf, file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ExportFormat::Json,
            Format::Csv => ExportFormat::Csv,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Validate { file } => validate(&file),
        Cmd::Run {
            file,
            connect,
            seed,
            out,
            format,
            replay_check,
        } => run(&file, connect.as_deref(), seed, out.as_deref(), format.into(), replay_check),
        Cmd::Replay { log, file } => replay_cmd(&log, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    scenario::validate(&read(path)?).map_err(|issues| {
        let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
        Failure::new(
            EXIT_FAILURE,
            format!("{} is invalid:\n{}", path.display(), lines.join("\n")),
        )
    })
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    println!(
        "{}: ok ({} events, {} s)",
        path.display(),
        s.timeline.len(),
        s.duration
    );
    Ok(())
}

fn run(
    path: &Path,
    connect: Option<&str>,
    seed: Option<u64>,
    out: Option<&Path>,
    format: ExportFormat,
    replay_check: bool,
) -> Result<(), Failure> {
    let mut scenario = load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let (report, log) = match connect {
        None => {
            let out = run_headless(&scenario).map_err(|e| match e {
                RunError::Invalid { .. } => Failure::new(EXIT_FAILURE, e.to_string()),
                _ => Failure::new(EXIT_FAILURE, format!("run failed: {e}")),
            })?;
            (out.report, out.log)
        }
        Some(addr) => {
            let run = remote::run_remote(addr, &scenario).map_err(|e| match e {
                remote::RemoteError::Connect { .. } | remote::RemoteError::Io(_) => {
                    Failure::new(EXIT_CONNECTION, e.to_string())
                }
                _ => Failure::new(EXIT_FAILURE, e.to_string()),
            })?;
            eprintln!("session {} finished", run.sid);
            (run.report, run.log)
        }
    };
    if replay_check {
        replay(&log, &scenario).map_err(|e| Failure::new(EXIT_FAILURE, format!("replay check: {e}")))?;
        eprintln!("replay check: {} ticks match", log.len());
    }
    emit(&report, &log, out, format)?;
    if !report.is_finite() {
        return Err(Failure::new(EXIT_FAILURE, "report contains non-finite metrics"));
    }
    Ok(())
}

fn emit(report: &MetricsReport, log: &SessionLog, out: Option<&Path>, format: ExportFormat) -> Result<(), Failure> {
    let io_err = |p: &Path, e: io::Error| Failure::new(EXIT_FAILURE, format!("{}: {e}", p.display()));
    match out {
        None => {
            let stdout = io::stdout();
            export(report, format, stdout.lock()).map_err(|e| io_err(Path::new("<stdout>"), e))
        }
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let report_path = dir.join(format!("report.{}", format.extension()));
            let file = File::create(&report_path).map_err(|e| io_err(&report_path, e))?;
            export(report, format, file).map_err(|e| io_err(&report_path, e))?;
            let log_path = dir.join("session.ndjson");
            let mut file = File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
            log.write_ndjson(&mut file)
                .and_then(|()| file.flush())
                .map_err(|e| io_err(&log_path, e))?;
            println!("{}", report_path.display());
            println!("{}", log_path.display());
            Ok(())
        }
    }
}

fn replay_cmd(log_path: &Path, scenario_path: &Path) -> Result<(), Failure> {
    let file = File::open(log_path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", log_path.display())))?;
    let log = SessionLog::read_ndjson(BufReader::new(file))
        .map_err(|e| Failure::new(EXIT_FAILURE, format!("{}: {e}", log_path.display())))?;
    let scenario = load_scenario(scenario_path)?;
    let hashes = replay(&log, &scenario).map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    println!("replayed {} ticks, all hashes match", hashes.len());
    if let Some(last) = hashes.last() {
        println!("final hash {last}");
    }
    Ok(())
}

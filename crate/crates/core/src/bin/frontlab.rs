use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use frontlab::config::{list_presets, parse_config, preset, ScenarioConfig};
use frontlab::runner::{run, run_probe, verify_dir, RunOutcome};
use frontlab::FrontError;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "frontlab", version, about = "Level-set fronts with nonlocal speeds and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in scenario.
    Preset {
        /// Preset name; `list` prints the available names.
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the trajectory checks of a finished run directory.
    Verify { dir: PathBuf },
    /// Run only the multi-seed uniqueness probe of a scenario file.
    Probe {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &FrontError) -> u8 {
    match e {
        FrontError::Config { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, FrontError> {
    let text = fs::read_to_string(path).map_err(|e| FrontError::Config {
        line: 0,
        key: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

fn out_dir(config: &ScenarioConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("frontlab_out").join(&config.name))
}

fn report(outcome: &RunOutcome) -> ExitCode {
    for (name, ok) in &outcome.checks {
        println!("{name}: {}", if *ok { "pass" } else { "FAIL" });
    }
    println!("output: {}", outcome.output_dir.display());
    println!("digest: {}", outcome.digest);
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn execute(cli: Cli) -> Result<ExitCode, FrontError> {
    match cli.command {
        Command::Run { config, out } => {
            let config = load_config(&config)?;
            let dir = out_dir(&config, out);
            Ok(report(&run(&config, &dir)?))
        }
        Command::Preset { name, out } => {
            if name == "list" {
                for p in list_presets() {
                    println!("{p}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let config = preset(&name).map_err(|e| match e {
                FrontError::Parameter(m) => FrontError::Config {
                    line: 0,
                    key: "preset".into(),
                    message: m,
                },
                other => other,
            })?;
            let dir = out_dir(&config, out);
            Ok(report(&run(&config, &dir)?))
        }
        Command::Verify { dir } => {
            let outcome = verify_dir(&dir)?;
            for (name, ok) in &outcome.checks {
                println!("{name}: {}", if *ok { "pass" } else { "FAIL" });
            }
            for m in &outcome.mismatched {
                println!("mismatch: {m}");
            }
            Ok(if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            })
        }
        Command::Probe { config, out } => {
            let config = load_config(&config)?;
            let dir = out_dir(&config, out);
            Ok(report(&run_probe(&config, &dir)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("FRONTLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

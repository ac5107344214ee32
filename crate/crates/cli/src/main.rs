use std::path::PathBuf;
use std::process::ExitCode;

use algebroid_lab::{builtins, run, scenario, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "algebroid-lab", version, about = "Invariant connections on Lie algebroids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write report.json plus CSV tables.
    Run {
        scenario: PathBuf,
        /// Output directory; may also be given with --out.
        #[arg(value_name = "OUT", conflicts_with = "out")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the probe seed of the scenario.
        #[arg(long, env = "ALGEBROID_LAB_SEED")]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print available algebras, manifolds, actions, connections, methods and fixtures.
    ListBuiltins,
}

fn run_cmd(path: PathBuf, out: PathBuf, seed: Option<u64>, jobs: Option<usize>) -> Result<i32, CliError> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Input("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Input(format!("--jobs: {e}")))?;
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let sc = scenario::parse(&text)?;
    let seed = seed.unwrap_or(sc.probes.seed);
    let output = run::run_scenario(&sc, seed)?;
    run::write_outputs(&output, &out)?;
    let status = output.report["status"].as_str().unwrap_or("");
    eprintln!("{status}: {}", out.join("report.json").display());
    if let Some(err) = output.report.get("error").and_then(|e| e.as_str()) {
        eprintln!("{err}");
    }
    if let Some(checks) = output.report.get("expectations").and_then(|c| c.as_array()) {
        for c in checks.iter().filter(|c| c["passed"] == false) {
            eprintln!("mismatch: {} expected {} got {}", c["check"], c["expected"], c["actual"]);
        }
    }
    Ok(output.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::ListBuiltins => {
            print!("{}", builtins::render());
            0
        }
        Command::Run { scenario, out_dir, out, seed, jobs } => match out.or(out_dir) {
            None => {
                eprintln!("error: input error: an output directory is required (--out <dir>)");
                2
            }
            Some(out) => match run_cmd(scenario, out, seed, jobs) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            },
        },
    };
    ExitCode::from(code as u8)
}

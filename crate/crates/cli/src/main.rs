use clap::{Args, Parser, Subcommand};
use kwass_cli::pipeline::{list_scenarios, run_scenario, PipelineError, RunOptions, Stage};
use kwass_cli::scenario::Scenario;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Transport distances, kinetic pair simulations, and stability bounds on
/// the periodic phase space.
///
/// Exit codes: 0 success / verdict pass, 1 verdict fail, 2 usage or
/// configuration error, 3 runtime or numerical failure.
#[derive(Parser)]
#[command(name = "kwass", version, about, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the paired trajectory (writes trajectory.csv).
    Simulate(RunArgs),
    /// Simulate and measure transport distances (adds distances.csv).
    Distance(RunArgs),
    /// Tabulate stability bounds (adds bounds.csv and qseries.csv).
    Bounds(RunArgs),
    /// Score measurements against bounds (adds report.csv; exits 1 on a
    /// failed verdict).
    Verify(RunArgs),
    /// Run the full pipeline (adds manifest.json and plot.gp).
    Run(RunArgs),
    /// List and summarize the scenario files in a directory.
    List {
        /// Directory to scan for .toml / .json scenarios.
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
    },
    /// Parse and validate a scenario file without running anything.
    Validate {
        /// Scenario file (.toml or .json).
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (.toml or .json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the scenario's output.dir, else
    /// out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (default: KWASS_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::Distance(a) => (Stage::Distance, a),
        Command::Bounds(a) => (Stage::Bounds, a),
        Command::Verify(a) => (Stage::Verify, a),
        Command::Run(a) => (Stage::Run, a),
        Command::List { dir } => return list_command(&dir),
        Command::Validate { config } => return validate_command(&config),
    };
    match run_command(stage, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn thread_count(args: &RunArgs) -> Result<Option<usize>, PipelineError> {
    if let Some(n) = args.threads {
        return Ok(Some(n.max(1)));
    }
    match std::env::var("KWASS_THREADS") {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                PipelineError::Numerical(format!("KWASS_THREADS must be an integer, got {v:?}"))
            })?;
            Ok(Some(n.max(1)))
        }
        Err(_) => Ok(None),
    }
}

fn run_command(stage: Stage, args: &RunArgs) -> Result<ExitCode, PipelineError> {
    let scenario = Scenario::load(&args.config)?;
    let opts = RunOptions {
        stage: Some(stage),
        out: args.out.clone(),
        seed: args.seed,
    };
    let outcome = match thread_count(args)? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::Numerical(format!("thread pool: {e}")))?;
            pool.install(|| run_scenario(&scenario, &opts))?
        }
        None => run_scenario(&scenario, &opts)?,
    };
    for line in &outcome.messages {
        println!("{line}");
    }
    println!(
        "wrote {} artifacts to {}",
        outcome.artifacts.len(),
        outcome.out_dir.display()
    );
    Ok(match outcome.pass {
        Some(false) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

fn list_command(dir: &Path) -> ExitCode {
    match list_scenarios(dir) {
        Ok(rows) => {
            if rows.is_empty() {
                println!("no scenario files in {}", dir.display());
            }
            for row in rows {
                match row.error {
                    None => println!(
                        "{}: name={} mode={} n={} t_end={}",
                        row.path.display(),
                        row.name,
                        row.mode,
                        row.n,
                        row.t_end
                    ),
                    Some(e) => println!("{}: INVALID ({e})", row.path.display()),
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn validate_command(config: &Path) -> ExitCode {
    match Scenario::load(config).and_then(|s| s.validate().map(|_| s)) {
        Ok(s) => {
            println!("ok: {} ({} mode, n = {})", s.name, s.sim.mode, s.init.n);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

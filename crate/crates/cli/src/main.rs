use std::path::{Path, PathBuf};
use std::process::ExitCode;

use akd_core::orchestrator::{
    finalize_top, results_csv, run_search, OrchestratorError, RunConfig, RunOptions, Trajectory,
};
use clap::{Args, Parser, Subcommand};

mod report;

#[derive(Parser)]
#[command(
    name = "akd",
    version,
    about = "Distillation-guided architecture search"
)]
struct Cli {
    /// Default root for outputs when a command's output path is omitted.
    #[arg(long, env = "AKD_OUTPUT_ROOT", default_value = "runs", global = true)]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a search.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to <output-root>/<config stem>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluation workers; 0 uses the available parallelism.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        resume: bool,
        /// Stop after this many generations, leaving a resumable checkpoint.
        #[arg(long)]
        max_generations: Option<usize>,
    },
    /// Retrain the best in-window candidates with and without distillation.
    Finalize {
        #[arg(long)]
        trajectory: PathBuf,
        /// Latency window in ms as lo:hi; defaults to the run config.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        long_epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Output CSV; defaults to finalized.csv next to the trajectory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize one search (or compare two) and write the report bundle.
    Analyze {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        opts: ReportArgs,
    },
    /// Write the CSV and plot bundle under <output-root>/report unless --out is given.
    Report {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: ReportArgs,
    },
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Latency window for top-k operator statistics; defaults to the run config.
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Number of top candidates for operator statistics.
    #[arg(long, default_value_t = 100)]
    top: usize,
    /// Trailing candidates that form a search's final population.
    #[arg(long, default_value_t = 500)]
    tail: usize,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
    if !(lo <= hi) {
        return Err("window needs lo <= hi".into());
    }
    Ok((lo, hi))
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Storage(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Storage(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Storage(m) => write!(f, "storage error: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::ConfigInvalid(m) => CliError::Config(m),
            OrchestratorError::StorageFailure(m) => CliError::Storage(m),
            e => CliError::Other(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Storage(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Storage(format!("{}: {e}", path.display())))
}

fn search(
    root: &Path,
    config: &Path,
    out: Option<PathBuf>,
    opts: RunOptions,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let out =
        out.unwrap_or_else(|| root.join(config.file_stem().unwrap_or_else(|| "run".as_ref())));
    let summary = run_search(&cfg, &out, &opts)?;
    println!(
        "{} generations of {} complete{}; trajectory at {}",
        summary.generations_completed,
        cfg.generations,
        if summary.finished { "" } else { " (resumable)" },
        summary.trajectory.display()
    );
    Ok(())
}

fn finalize(
    trajectory: &Path,
    window: Option<(f64, f64)>,
    top: Option<usize>,
    long_epochs: Option<usize>,
    workers: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let t = Trajectory::read(trajectory)?;
    let f = &t.header.config.finalize;
    let results = finalize_top(
        &t,
        window.unwrap_or(f.window),
        top.unwrap_or(f.top_k),
        long_epochs.unwrap_or(f.long_epochs),
        workers,
    )?;
    let csv = results_csv(&results);
    let out = out.unwrap_or_else(|| trajectory.with_file_name("finalized.csv"));
    write_file(&out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            out,
            workers,
            resume,
            max_generations,
        } => search(
            &cli.output_root,
            &config,
            out,
            RunOptions {
                workers,
                resume,
                max_generations,
            },
        ),
        Command::Finalize {
            trajectory,
            window,
            top,
            long_epochs,
            workers,
            out,
        } => finalize(&trajectory, window, top, long_epochs, workers, out),
        Command::Analyze {
            trajectory,
            compare,
            report,
            opts,
        } => report::run(&trajectory, compare.as_deref(), &report, &opts, true),
        Command::Report {
            trajectory,
            compare,
            out,
            opts,
        } => {
            let dir = out.unwrap_or_else(|| cli.output_root.join("report"));
            report::run(&trajectory, compare.as_deref(), &dir, &opts, false)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("akd: {e}");
            ExitCode::from(e.code())
        }
    }
}

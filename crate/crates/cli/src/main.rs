//! Scenario runner: `run` a single simulation, `compare` the baseline and
//! QoE schedulers on one config, or `analyze` an existing trace file.
//!
//! Option precedence is CLI flags over the config file over built-in
//! defaults. Exit codes: 0 success, 1 config error, 2 I/O error,
//! 3 malformed trace.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uplinksim::report::{self, analysis_to_csv};
use uplinksim::{ScenarioConfig, SchedulerMode, SimError, SimTime};

#[derive(Parser)]
#[command(name = "uplinksim", version, about = "WiMAX UGS uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config file (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulated duration, in seconds
    #[arg(long)]
    duration: Option<f64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig, SimError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(duration) = self.duration {
            cfg.duration_s = duration;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its trace and per-flow report
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Scheduler mode; defaults to the config file's choice
        #[arg(long)]
        mode: Option<SchedulerModeArg>,
        /// Trace output path
        #[arg(long, default_value = "trace.tr")]
        out_trace: PathBuf,
        /// CSV report output path
        #[arg(long, default_value = "report.csv")]
        out_report: PathBuf,
    },
    /// Run baseline and QoE on identical parameters and report side by side
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trace path stem; `-baseline` / `-qoe` are inserted before the
        /// extension
        #[arg(long, default_value = "trace.tr")]
        out_trace: PathBuf,
        /// Side-by-side CSV report path
        #[arg(long, default_value = "compare.csv")]
        out_report: PathBuf,
    },
    /// Recompute per-flow metrics from an existing trace file
    Analyze {
        /// Trace file to parse
        trace: PathBuf,
        /// Throughput averaging window in seconds; defaults to the last
        /// trace timestamp
        #[arg(long)]
        duration: Option<f64>,
        /// CSV report output path; stdout when omitted
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchedulerModeArg {
    Baseline,
    Qoe,
}

impl From<SchedulerModeArg> for SchedulerMode {
    fn from(m: SchedulerModeArg) -> Self {
        match m {
            SchedulerModeArg::Baseline => SchedulerMode::Baseline,
            SchedulerModeArg::Qoe => SchedulerMode::Qoe,
        }
    }
}

fn with_mode_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{suffix}.{ext}"),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

fn execute(command: Command) -> Result<(), SimError> {
    match command {
        Command::Run {
            scenario,
            mode,
            out_trace,
            out_report,
        } => {
            let cfg = scenario.resolve()?;
            let mode = mode.map(SchedulerMode::from).unwrap_or(cfg.controller.mode);
            let outcome = report::run_to_files(&cfg, mode, &out_trace, Some(&out_report))?;
            eprintln!(
                "processed {} events over {} s; trace: {}, report: {}",
                outcome.events_processed,
                cfg.duration_s,
                out_trace.display(),
                out_report.display()
            );
        }
        Command::Compare {
            scenario,
            out_trace,
            out_report,
        } => {
            let cfg = scenario.resolve()?;
            let baseline_trace = with_mode_suffix(&out_trace, "baseline");
            let qoe_trace = with_mode_suffix(&out_trace, "qoe");
            let cmp = report::compare(&cfg, &baseline_trace, &qoe_trace, Some(&out_report))?;
            eprintln!(
                "compared {} flows; traces: {}, {}; report: {}",
                cmp.flows.len(),
                baseline_trace.display(),
                qoe_trace.display(),
                out_report.display()
            );
        }
        Command::Analyze {
            trace,
            duration,
            out_report,
        } => {
            let window = duration.map(SimTime::from_secs_f64);
            let analysis = report::analyze(&trace, window)?;
            let csv = analysis_to_csv(&analysis);
            match out_report {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dspn::config::RunConfig;
use dspn::error::{DspnError, Result};
use dspn::report::{comparison_csv, RunReport};
use dspn::run::{run, RunOptions};
use dspn_core::synth::{generate_dataset, SynthSpec};

/// Neuropathy severity grading from gait EMG and ground reaction forces.
#[derive(Debug, Parser)]
#[command(name = "dspn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known class structure.
    Synth(SynthArgs),
    /// Run the full pipeline described by a TOML configuration.
    Run(RunArgs),
    /// Compare best-K accuracy across finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// Output directory for manifest.json and signals/.
    #[arg(long, default_value = "synthetic")]
    out: PathBuf,
    /// Sampling rate in Hz.
    #[arg(long)]
    fs: Option<f64>,
    /// Trial duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Subjects per grade, Absent to Severe.
    #[arg(long, value_parser = four_counts)]
    subjects: Option<[usize; 4]>,
    /// Trials per grade, Absent to Severe.
    #[arg(long, value_parser = four_counts)]
    trials: Option<[usize; 4]>,
    /// Multiplies the distance of every class from Absent.
    #[arg(long)]
    gap_scale: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_k: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// report.json files or run directories.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Write the comparison CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn four_counts(s: &str) -> std::result::Result<[usize; 4], String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected 4 comma-separated counts, got {}", v.len()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::with_seed(a.seed);
    if let Some(s) = a.gap_scale {
        spec = spec.with_gap_scale(s);
    }
    spec.fs = a.fs.unwrap_or(spec.fs);
    spec.duration_s = a.duration.unwrap_or(spec.duration_s);
    spec.subjects_per_class = a.subjects.unwrap_or(spec.subjects_per_class);
    spec.trials_per_class = a.trials.unwrap_or(spec.trials_per_class);
    let dataset = generate_dataset(&spec).map_err(DspnError::Spec)?;
    let manifest = dspn::io::write_fixture(&dataset, &a.out)?;
    println!("{} trials written to {}", dataset.trials.len(), manifest.display());
    Ok(())
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    let opts = RunOptions { seed: a.seed, output: a.output, threads: a.threads, max_k: a.max_k };
    opts.apply(&mut cfg);
    let report = run(&cfg, opts.threads)?;
    print!("{}", report.summary_table());
    println!("artifacts in {}", cfg.output.display());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| if p.is_dir() { RunReport::read(&p.join("report.json")) } else { RunReport::read(p) })
        .collect::<Result<Vec<_>>>()?;
    let csv = comparison_csv(&reports);
    match a.out {
        Some(p) => std::fs::write(&p, csv).map_err(|e| DspnError::io(&p, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

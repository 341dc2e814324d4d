//! `ral`: batch harness for robust auction experiments.

mod audit;
mod cmd_dist;
mod cmd_learn;
mod cmd_opt;
mod cmd_robustify;
mod experiment;
mod load;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use report::Report;

#[derive(Parser)]
#[command(name = "ral", version, about = "Robust auction design under distribution shift")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Root seed (default 0); every trial derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report file: `.csv` for CSV rows, anything else for JSON.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Slack added to every bound before a row fails.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Trial count override.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
}

impl Global {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Tv,
    Kolmogorov,
    Levy,
    Prokhorov,
    Nisan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ic {
    Bic,
    Dsic,
}

#[derive(Subcommand)]
enum Command {
    /// Distance between two distribution files.
    Dist(cmd_dist::DistArgs),
    /// Optimal (approximately) incentive compatible revenue of a scenario.
    Opt(cmd_opt::OptArgs),
    /// Build a robust mechanism and optionally audit it against a true distribution.
    Robustify(cmd_robustify::RobustifyArgs),
    /// Learn a distribution from samples.
    Learn(cmd_learn::LearnArgs),
    /// Run a configured experiment and emit one row per trial and metric.
    Experiment(experiment::ExperimentArgs),
}

fn run(cli: Cli) -> anyhow::Result<Report> {
    let g = &cli.global;
    match cli.cmd {
        Command::Dist(a) => cmd_dist::run(&a, g),
        Command::Opt(a) => cmd_opt::run(&a, g),
        Command::Robustify(a) => cmd_robustify::run(&a, g),
        Command::Learn(a) => cmd_learn::run(&a, g),
        Command::Experiment(a) => experiment::run(&a, g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.global.out.clone();
    let report = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {:#}", e);
            return ExitCode::from(1);
        }
    };
    print!("{}", report.table());
    if let Some(path) = out {
        if let Err(e) = report.write(&path) {
            eprintln!("error: writing {}: {:#}", path.display(), e);
            return ExitCode::from(1);
        }
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use sentevo::evolution::Objective;
use sentevo::market_data::DateRange;
use sentevo::pipeline::{self, Overrides, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Sentiment-driven strategy evolution and portfolio comparison.
#[derive(Parser)]
#[command(name = "sentevo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted trading rules
    Synth {
        /// Master seed for the whole dataset
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Number of assets to generate
        #[arg(long, default_value_t = 10)]
        assets: usize,
        /// Number of daily returns per asset
        #[arg(long, default_value_t = 250)]
        days: usize,
        /// Mean daily edge added while the planted rule is long
        #[arg(long, default_value_t = 0.003)]
        edge: f64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve one strategy per configured asset over the train window
    Optimize(ConfigArgs),
    /// Re-simulate optimized strategies over both windows
    Backtest(ConfigArgs),
    /// Compare evolutionary, mean-variance, and equal-weight portfolios
    Compare(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the train window (from:to, inclusive)
    #[arg(long)]
    train: Option<DateRange>,
    /// Override the test window (from:to, inclusive)
    #[arg(long)]
    test: Option<DateRange>,
    /// Override the number of evaluated generations
    #[arg(long)]
    generations: Option<usize>,
    /// Override the fitness objective, e.g. "sharpe_like" or "-semi_dev,0.5*cum_return"
    #[arg(long, allow_hyphen_values = true)]
    objective: Option<Objective>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, pipeline::PipelineError> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            train: self.train,
            test: self.test,
            generations: self.generations,
            objective: self.objective.clone(),
        };
        RunConfig::load(&self.config, &overrides)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are successes; everything else is a usage error
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let outcome = match cli.command {
        Command::Synth {
            seed,
            assets,
            days,
            edge,
            out,
        } => pipeline::cmd_synth(seed, assets, days, edge, &out),
        Command::Optimize(args) => args.load().and_then(|c| pipeline::cmd_optimize(&c)),
        Command::Backtest(args) => args.load().and_then(|c| pipeline::cmd_backtest(&c)),
        Command::Compare(args) => args.load().and_then(|c| pipeline::cmd_compare(&c)),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

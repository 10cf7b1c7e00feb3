use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdprop::experiments::{
    load_config, run_interval_experiment, run_propagate, run_selective_prediction, run_train, run_tv_experiment,
    run_twomoons_map, run_w1_experiment, ExperimentConfig, IntervalConfig, PropagateConfig, Report, SelectiveConfig,
    TrainConfig, TvConfig, TwoMoonsConfig, W1Config,
};

#[derive(Parser)]
#[command(name = "sdprop", version, about = "Distribution propagation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Push one input distribution through a network with several methods.
    Propagate(Common),
    /// Train a network or probabilistic network.
    Train(Common),
    /// Total-variation accuracy against a Monte-Carlo oracle.
    EvalTv(Common),
    /// Wasserstein-1 accuracy and the single-ReLU sweep.
    EvalW1(Common),
    /// Prediction-interval calibration with model selection.
    EvalInterval(Common),
    /// Selective prediction with out-of-distribution inputs.
    EvalSelective(Common),
    /// Uncertainty map of a two-moons classifier.
    TwoMoons(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<experiment>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shrink the run to a quick check.
    #[arg(long)]
    smoke: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn run<C: ExperimentConfig>(args: &Common, runner: fn(&C) -> sdprop::Result<Report>) -> Result<(), String> {
    let mut cfg: C = load_config(args.config.as_deref()).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if args.smoke {
        cfg.smoke();
    }
    if args.print_config {
        print!("{}", toml::to_string(&cfg).map_err(|e| e.to_string())?);
        return Ok(());
    }
    let report = runner(&cfg).map_err(|e| e.to_string())?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out").join(C::NAME));
    for path in report.write(&out).map_err(|e| e.to_string())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Propagate(a) => run::<PropagateConfig>(a, run_propagate),
        Command::Train(a) => run::<TrainConfig>(a, run_train),
        Command::EvalTv(a) => run::<TvConfig>(a, run_tv_experiment),
        Command::EvalW1(a) => run::<W1Config>(a, run_w1_experiment),
        Command::EvalInterval(a) => run::<IntervalConfig>(a, run_interval_experiment),
        Command::EvalSelective(a) => run::<SelectiveConfig>(a, run_selective_prediction),
        Command::TwoMoons(a) => run::<TwoMoonsConfig>(a, run_twomoons_map),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

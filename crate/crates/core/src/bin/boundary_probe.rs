use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boundary_probe::pipeline::{run_all, run_analyze, run_report, run_train, PipelineConfig};
use boundary_probe::{builtin_systems, Error};

#[derive(Parser)]
#[command(name = "boundary-probe", version, about = "Probe a black-box decision system for its boundary logic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Config file (TOML, flat keys); flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in system name or "external"
    #[arg(long)]
    system: Option<String>,
    /// Master seed for training, analysis, and clustering
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for all artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    total_timesteps: Option<usize>,
    #[arg(long)]
    n_envs: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    action_scale: Option<f64>,
    #[arg(long)]
    train_max_steps: Option<usize>,
    #[arg(long)]
    analysis_episodes: Option<usize>,
    #[arg(long)]
    analysis_max_steps: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in systems
    ListSystems,
    /// Train the explorer agent and save a checkpoint
    Train(ConfigArgs),
    /// Collect counterfactuals, cluster them, and extract rules
    Analyze(ConfigArgs),
    /// Validate artifacts against ground truth and write the report
    Report(ConfigArgs),
    /// Train, analyze, and report in one go
    Run(ConfigArgs),
}

fn build_config(args: &ConfigArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &args.system {
        cfg.system = v.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.total_timesteps {
        cfg.total_timesteps = v;
    }
    if let Some(v) = args.n_envs {
        cfg.n_envs = v;
    }
    if let Some(v) = args.n_steps {
        cfg.n_steps = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.action_scale {
        cfg.action_scale = v;
    }
    if let Some(v) = args.train_max_steps {
        cfg.train_max_steps = v;
    }
    if let Some(v) = args.analysis_episodes {
        cfg.analysis_episodes = v;
    }
    if let Some(v) = args.analysis_max_steps {
        cfg.analysis_max_steps = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.n_init {
        cfg.n_init = v;
    }
    if let Some(v) = args.max_depth {
        cfg.max_depth = v;
    }
    Ok(cfg)
}

fn list_systems() {
    for sys in builtin_systems() {
        let b = sys.bounds();
        println!(
            "{} ({}-D, [{},{}])",
            sys.name(),
            sys.input_dim(),
            b.low[0],
            b.high[0]
        );
    }
}

// exit codes: 0 success, 1 pipeline error, 2 validation failure
fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::ListSystems => {
            list_systems();
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(args) => {
            let cfg = build_config(&args)?;
            let ckpt = run_train(&cfg)?;
            println!("checkpoint written to {}", ckpt.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze(args) => {
            let cfg = build_config(&args)?;
            let artifacts = run_analyze(&cfg)?;
            println!(
                "collected {} counterfactual records -> {}",
                artifacts.records.len(),
                artifacts.trajectories.display()
            );
            println!("rules written to {}", artifacts.rules_txt.display());
            match artifacts.clusters_csv {
                Some(p) => println!("cluster plot data written to {}", p.display()),
                None => println!("cluster plot data skipped (1D input)"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report(args) => {
            let cfg = build_config(&args)?;
            let report = run_report(&cfg)?;
            print!("{}", report.render());
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            let report = run_all(&cfg)?;
            print!("{}", report.render());
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

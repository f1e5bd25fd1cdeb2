use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use lmrc_cli::commands::{self, EXIT_USAGE};
use lmrc_cli::config::{parse_mode, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "lmrc",
    version,
    about = "Class-incremental learning experiments with label mapping and response consolidation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat JSON scenario config; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment seed (required here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports and tables.
    #[arg(long, default_value = "lmrc-out")]
    out: PathBuf,
    /// Comma-separated mode list (lmrc, lm_only, finetune_softmax, multihead_softmax).
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<String>>,
    /// Per-class rehearsal-pool cap; enables the review loss.
    #[arg(long)]
    rehearsal_m: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a label-vector codebook and a capacity table.
    Codebook(CommonArgs),
    /// Run the class-incremental benchmark for every configured mode.
    Run(CommonArgs),
    /// Reproduce the softmax-suppression bar data (4 classes, 2 increments).
    SuppressionDemo(CommonArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(CommonArgs),
}

fn resolve(args: &CommonArgs) -> Result<ScenarioConfig, String> {
    let mut config = match &args.config {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(modes) = &args.mode {
        config.modes = modes
            .iter()
            .map(|m| parse_mode(m))
            .collect::<Result<_, _>>()?;
    }
    if let Some(m) = args.rehearsal_m {
        config.rehearsal_m = Some(m);
    }
    config.validate()?;
    Ok(config)
}

fn run(command: &Command) -> u8 {
    let args = match command {
        Command::Codebook(a)
        | Command::Run(a)
        | Command::SuppressionDemo(a)
        | Command::Gradcheck(a) => a,
    };
    let config = match resolve(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("usage error: {e}");
            return EXIT_USAGE;
        }
    };
    if !matches!(command, Command::Gradcheck(_)) {
        if let Err(e) = std::fs::create_dir_all(&args.out) {
            eprintln!("usage error: cannot create {}: {e}", args.out.display());
            return EXIT_USAGE;
        }
    }
    match command {
        Command::Codebook(_) => commands::cmd_codebook(&config, &args.out),
        Command::Run(_) => commands::cmd_run(&config, &args.out),
        Command::SuppressionDemo(_) => commands::cmd_suppression_demo(&config, &args.out),
        Command::Gradcheck(_) => commands::cmd_gradcheck(&config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };
    ExitCode::from(run(&cli.command))
}

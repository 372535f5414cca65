use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fgns::neighbors::Method;
use fgns::synthetic::SyntheticConfig;
use fgns::{FgnsError, RunConfig};
use fgns_cli::panel::Format;

#[derive(Parser)]
#[command(name = "fgns", version, about = "Feature-guided neighbor selection pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set features.tau_g=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the reference classifier.
    Train,
    /// Build the class feature catalog and prototypes.
    BuildFeatures,
    /// Explain one test instance.
    Explain {
        #[arg(long)]
        query_id: usize,
        #[arg(long, default_value = "fgns")]
        method: Method,
        /// Tint the predicted class's mask pixels.
        #[arg(long)]
        overlay: bool,
        #[arg(long, default_value = "png")]
        format: Format,
    },
    /// Run the quantitative comparison against the baseline.
    Evaluate,
    /// Re-render the panel of a saved explanation.
    Render {
        #[arg(long)]
        explanation: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overlay: bool,
        #[arg(long, default_value = "png")]
        format: Format,
    },
    /// Write a synthetic glyph dataset in IDX format.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        train_per_class: usize,
        #[arg(long, default_value_t = 100)]
        test_per_class: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cli: Cli) -> fgns::Result<()> {
    if let Command::GenSynthetic {
        out,
        train_per_class,
        test_per_class,
        seed,
    } = &cli.command
    {
        let syn = SyntheticConfig {
            train_per_class: *train_per_class,
            test_per_class: *test_per_class,
            seed: *seed,
            ..Default::default()
        };
        fgns_cli::cmd_gen_synthetic(out, &syn)?;
        return Ok(());
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| FgnsError::arg(e.to_string()))?;
    }
    tracing::debug!(config_hash = %cfg.hash(), "configuration loaded");
    match cli.command {
        Command::Train => {
            fgns_cli::cmd_train(&cfg)?;
        }
        Command::BuildFeatures => {
            fgns_cli::cmd_build_features(&cfg)?;
        }
        Command::Explain {
            query_id,
            method,
            overlay,
            format,
        } => {
            fgns_cli::cmd_explain(&cfg, query_id, method, overlay, format)?;
        }
        Command::Evaluate => {
            fgns_cli::cmd_evaluate(&cfg)?;
        }
        Command::Render {
            explanation,
            out,
            overlay,
            format,
        } => {
            fgns_cli::cmd_render(&cfg, &explanation, out.as_deref(), overlay, format)?;
        }
        Command::GenSynthetic { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(fgns_cli::exit_code(&e) as u8)
        }
    }
}

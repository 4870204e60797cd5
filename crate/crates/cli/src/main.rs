//! `cidnet` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cidnet::metrics::format_table;
use cidnet::netspec::Variant;
use cidnet::pipeline::{
    cmd_eval, cmd_infer, cmd_simulate, cmd_train, export_bmode, inspect_model, PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "cidnet",
    version,
    about = "Diverging-wave compounding with complex-valued networks"
)]
struct Cli {
    /// Pipeline configuration (TOML). Built-in defaults are used when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Single-threaded numerics for bit-reproducible runs.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Log progress (repeat for more detail).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scenes and write beamformed images and compounds.
    Simulate,
    /// Train the configured model variant.
    Train,
    /// Reconstruct every test scene with the trained model.
    Infer,
    /// Compare reconstructions and 3-transmit compounding with the full compound.
    Eval,
    /// Render a stored image as an 8-bit B-mode graymap.
    ExportBmode {
        input: PathBuf,
        output: PathBuf,
        /// Displayed dynamic range in dB.
        #[arg(long, default_value_t = 60.0)]
        dynamic_range: f64,
    },
    /// Print parameter count, receptive field and FLOPs of a variant.
    InspectModel {
        /// cid, id or 2bid; all three when omitted.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.deterministic {
        cfg.trainer.threads = 1;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate => {
            let s = cmd_simulate(&cfg)?;
            println!(
                "simulated {} train, {} val, {} test scenes ({} files) in {}",
                s.counts[0],
                s.counts[1],
                s.counts[2],
                s.files,
                cfg.paths.data.display()
            );
        }
        Command::Train => {
            let out = cmd_train(&cfg)?;
            for (path, report) in &out.branches {
                println!(
                    "{}: {} epochs, best epoch {} (val loss {:.6e}){}",
                    path.display(),
                    report.history.len(),
                    report.best_epoch,
                    report.best_val_loss,
                    if report.early_stopped {
                        ", early stop"
                    } else {
                        ""
                    }
                );
            }
        }
        Command::Infer => {
            let paths = cmd_infer(&cfg)?;
            let dir = cfg.paths.output.join(cfg.model.variant.to_string());
            println!("wrote {} reconstructions to {}", paths.len(), dir.display());
        }
        Command::Eval => {
            let reports = cmd_eval(&cfg)?;
            print!("{}", format_table(&reports));
        }
        Command::ExportBmode {
            input,
            output,
            dynamic_range,
        } => {
            export_bmode(&input, &output, &cfg.grid, dynamic_range)?;
            println!("wrote {}", output.display());
        }
        Command::InspectModel { variant } => {
            let variants = variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
            for (i, v) in variants.into_iter().enumerate() {
                if i > 0 {
                    println!();
                }
                let grid = if v.uses_iq() {
                    &cfg.grid.iq
                } else {
                    &cfg.grid.rf
                };
                print!("{}", inspect_model(v, grid));
            }
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

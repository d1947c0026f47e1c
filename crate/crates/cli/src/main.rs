use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use maptopo_cli::{
    cmd_ablation, cmd_compare, cmd_gradcheck, cmd_metrics, cmd_ratio_sweep, cmd_split, cmd_stitch,
    cmd_tile, cmd_train, CliError, CliResult, ModeSelection, TrainOptions,
};
use maptopo_core::trainer::FreezeMode;
use maptopo_core::LossWeights;

#[derive(Parser)]
#[command(name = "maptopo", version, about = "Map tile quality and topology toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Luminance,
    Rgbmean,
    Both,
}

impl From<Mode> for ModeSelection {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Luminance => ModeSelection::Luminance,
            Mode::Rgbmean => ModeSelection::Rgbmean,
            Mode::Both => ModeSelection::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Freeze {
    /// Only the cycle content term of the first step is dropped.
    Cycle,
    /// The first-step generator is not updated at all.
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Per-tile MSE, SSIM and ESSI for a generated directory.
    Metrics {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean metrics of several models on one dataset.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Loss-combination ablation tables.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrains the reference model at several paired ratios.
    RatioSweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Splits paired directories into paired, unpaired and test records.
    Split {
        #[arg(long)]
        rs: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        test_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cuts an image into k x k tiles.
    Tile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        /// Square working size the image is resized to before cutting.
        #[arg(long)]
        resize: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reassembles a tile directory.
    Stitch {
        #[arg(long)]
        tiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains the reference affine models on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 150)]
        t_s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "cycle")]
        freeze: Freeze,
        #[arg(long)]
        supervised_only: bool,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Checks analytic loss gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Runs the perception study server.
    Serve {
        #[arg(long)]
        study: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Metrics {
            generated,
            truth,
            mode,
            out,
        } => {
            let report = cmd_metrics(&generated, &truth, mode.into(), &out)?;
            print_json(&report.aggregates)?;
        }
        Command::Compare { config, out } => {
            let reports = cmd_compare(&config, &out)?;
            for (name, r) in reports {
                println!("{name}: {}", serde_json::to_string(&r.aggregates).unwrap_or_default());
            }
        }
        Command::Ablation { config, out } => {
            print_json(&cmd_ablation(&config, &out)?)?;
        }
        Command::RatioSweep {
            manifest,
            ratios,
            seed,
            epochs,
            out,
        } => {
            print_json(&cmd_ratio_sweep(&manifest, &ratios, seed, epochs, &out)?)?;
        }
        Command::Split {
            rs,
            maps,
            ratio,
            seed,
            test_fraction,
            out,
        } => {
            print_json(&cmd_split(&rs, &maps, ratio, seed, test_fraction, &out)?)?;
        }
        Command::Tile { input, k, resize, out } => {
            let index = cmd_tile(&input, k, resize, &out)?;
            println!("{} tiles of {}px", index.files.len(), index.tile_size);
        }
        Command::Stitch { tiles, out } => {
            let (h, w) = cmd_stitch(&tiles, &out)?;
            println!("{h}x{w}");
        }
        Command::Train {
            manifest,
            epochs,
            t_s,
            seed,
            freeze,
            supervised_only,
            log,
            checkpoint,
        } => {
            let summary = cmd_train(&TrainOptions {
                manifest,
                epochs,
                t_s,
                seed,
                freeze_mode: match freeze {
                    Freeze::Cycle => FreezeMode::CycleOnly,
                    Freeze::All => FreezeMode::AllTerms,
                },
                supervised_only,
                weights: LossWeights::default(),
                log_jsonl: log,
                checkpoint,
            })?;
            print_json(&summary)?;
        }
        Command::Gradcheck {
            seed,
            pairs,
            size,
            step,
        } => {
            let report = cmd_gradcheck(seed, pairs, size, step)?;
            print_json(&report)?;
            if !report.passed() {
                eprintln!("gradcheck failed: worst relative error {:e}", report.worst());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Serve { study, votes, addr } => {
            let study = maptopo_perception::Study::load(&study)?;
            let state = maptopo_perception::AppState::new(study, &votes)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| CliError::Validation(format!("{addr}: {e}")))?;
                eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Internal(e.to_string()))?);
                maptopo_perception::serve(listener, state)
                    .await
                    .map_err(|e| CliError::Internal(e.to_string()))
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

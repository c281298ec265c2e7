//! `dinterp`: train, evaluate and apply delta-mode motion in-betweeners.

mod commands;
mod config;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dinterp::baselines::BaselineKind;
use dinterp::motion::SynthKind;
use dinterp::par::Exec;

use commands::{AblateOpts, BaselineOpts, Filler, SynthOpts};
use config::RunConfig;
use error::{CliError, CliResult, EXIT_CONFIG, EXIT_OK};

#[derive(Parser)]
#[command(name = "dinterp", version, about = "Delta-mode motion in-betweening")]
struct Cli {
    /// Run every data-parallel loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

/// Config file plus `section.key=value` overrides.
#[derive(clap::Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set train.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, sequential: bool) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if sequential {
            cfg.parallel = false;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic motion clips and their skeleton.
    Synth {
        /// Comma-separated: sinusoid-walk, figure-eight, two-pose-blend.
        #[arg(long, value_delimiter = ',', default_value = "sinusoid-walk")]
        kind: Vec<String>,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clips per kind, with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// `biped5`, `chain:N` or a skeleton JSON file.
        #[arg(long, default_value = "biped5")]
        skeleton: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; checkpoints and a JSON-lines log go to --out.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate checkpoints; several checkpoints are averaged.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a zero-parameter baseline: zerovel, slerp or lerp.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Standardize L2P with statistics of this training set.
        #[arg(long)]
        train_data: Option<PathBuf>,
        /// Standardize L2P with a saved norm_stats.json.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill the empty rows of a CSV file.
    Inbetween {
        #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, requires = "skeleton")]
        baseline: Option<String>,
        /// Skeleton for --baseline (`biped5`, `chain:N` or a JSON file).
        #[arg(long)]
        skeleton: Option<String>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every listed delta-mode cell.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "Last:I,Last:Last,No:No,No:I,No:Last")]
        modes: String,
        #[arg(long, value_enum, default_value = "on")]
        recon: OnOff,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test_data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let seq = cli.sequential;
    match cli.command {
        Command::Synth {
            kind,
            frames,
            seed,
            count,
            skeleton,
            out,
        } => {
            let kinds = kind
                .iter()
                .map(|k| k.parse::<SynthKind>())
                .collect::<Result<Vec<_>, _>>()?;
            let files = commands::synth(&SynthOpts {
                kinds,
                frames,
                seed,
                count,
                skeleton: commands::parse_skeleton(&skeleton)?,
                out: out.clone(),
            })?;
            println!("wrote {} clips to {}", files.len(), out.display());
        }
        Command::Train { cfg, data, seed, out } => {
            let mut c = cfg.load(seq)?;
            if let Some(s) = seed {
                c.train.seed = s;
            }
            let fin = commands::train(c, data.as_deref(), &out)?;
            println!("final checkpoint: {}", fin.display());
        }
        Command::Eval {
            cfg,
            checkpoint,
            data,
            lengths,
            out,
        } => {
            commands::eval(cfg.load(seq)?, &checkpoint, data.as_deref(), lengths, &out)?;
        }
        Command::Baseline {
            cfg,
            kind,
            data,
            train_data,
            stats,
            lengths,
            out,
        } => {
            let opts = BaselineOpts {
                kind: kind.parse::<BaselineKind>()?,
                data,
                train_data,
                stats,
                lengths,
                out,
            };
            commands::baseline(cfg.load(seq)?, &opts)?;
        }
        Command::Inbetween {
            checkpoint,
            baseline,
            skeleton,
            input,
            out,
        } => {
            let filler = match (checkpoint, baseline) {
                (Some(c), _) => Filler::Model(c),
                (None, Some(b)) => Filler::Baseline {
                    kind: b.parse()?,
                    skeleton: commands::parse_skeleton(skeleton.as_deref().unwrap_or("biped5"))?,
                },
                (None, None) => return Err(CliError::Config("pass --checkpoint or --baseline".into())),
            };
            let exec = if seq { Exec::Sequential } else { Exec::Parallel };
            let n = commands::inbetween(&filler, &input, &out, exec)?;
            println!("filled {n} frames into {}", out.display());
        }
        Command::Ablate {
            cfg,
            modes,
            recon,
            seeds,
            data,
            test_data,
            out,
        } => {
            let opts = AblateOpts {
                modes: commands::parse_modes(&modes)?,
                recon: matches!(recon, OnOff::On),
                seeds,
                data,
                test_data,
                out,
            };
            commands::ablate(cfg.load(seq)?, &opts)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK as u8);
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error[{EXIT_CONFIG}] config: {first}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}

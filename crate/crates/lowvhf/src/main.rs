use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lowvhf::config::{Overrides, PatternName, SessionConfig, SourceSection};
use lowvhf::frames::write_frames;
use lowvhf::report::write_reports;
use lowvhf::session::{cmd_analyze, cmd_simulate, cmd_sweep, pacing_summary, SweepAxis};
use lowvhf_core::video::generate_test_pattern;

/// Simulate a low-rate BPSK video link and measure BER and PSNR.
#[derive(Parser)]
#[command(name = "lowvhf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and write its report and artifacts.
    Simulate(SessionArgs),
    /// Run one session per value of a parameter.
    Sweep {
        #[command(flatten)]
        session: SessionArgs,
        /// Parameter to vary.
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
    /// Recompute a report from packet logs and frame dumps.
    Analyze {
        #[arg(long)]
        tx_log: PathBuf,
        #[arg(long)]
        rx_log: PathBuf,
        /// Reference frame dump stem (without extension).
        #[arg(long, requires = "rx_frames")]
        ref_frames: Option<PathBuf>,
        /// Received frame dump stem (without extension).
        #[arg(long, requires = "ref_frames")]
        rx_frames: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic frame sequence.
    GenPattern {
        #[arg(long, value_enum, default_value = "gradient")]
        pattern: PatternArg,
        #[arg(long, default_value_t = 320)]
        width: usize,
        #[arg(long, default_value_t = 240)]
        height: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, default_value_t = 15)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output stem; `.raw` and `.toml` are appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print rate and pacing figures for a configuration.
    Info(SessionArgs),
}

#[derive(Args)]
struct SessionArgs {
    /// Session config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Channel file (TOML), replacing the configured channel.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Set the AWGN level, adding an AWGN stage if needed.
    #[arg(long, allow_negative_numbers = true)]
    ebn0_db: Option<f64>,
    /// Bypass the modem and flip payload bits at this rate.
    #[arg(long)]
    flip_rate: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    payload_size: Option<usize>,
    #[arg(long)]
    sps: Option<usize>,
    #[arg(long)]
    rolloff: Option<f64>,
}

impl SessionArgs {
    fn load(&self) -> anyhow::Result<SessionConfig> {
        let mut cfg = match &self.config {
            Some(path) => SessionConfig::load(path)?,
            None => SessionConfig::default(),
        };
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            channel: self.channel.clone(),
            ebn0_db: self.ebn0_db,
            flip_rate: self.flip_rate,
            frames: self.frames,
            payload_size: self.payload_size,
            sps: self.sps,
            rolloff: self.rolloff,
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Ebn0Db,
    FlipRate,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Gradient,
    Checker,
    MovingBox,
    Noise,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let outcome = cmd_simulate(&cfg)?;
            write_reports(std::io::stdout().lock(), std::slice::from_ref(&outcome.report))?;
            if let Some(d) = outcome.diagnostics {
                eprintln!(
                    "receiver: frequency offset {:.2} Hz, lock metric {:.3}, {} symbols",
                    d.freq_offset_estimate_hz, d.lock_metric, d.symbols
                );
            }
            eprintln!("artifacts in {}", cfg.output.dir.display());
        }
        Command::Sweep { session, axis, values } => {
            let cfg = session.load()?;
            let axis = match axis {
                Axis::Ebn0Db => SweepAxis::Ebn0Db,
                Axis::FlipRate => SweepAxis::FlipRate,
            };
            let rows = cmd_sweep(&cfg, axis, &values)?;
            let failed = rows.iter().filter(|r| r.report.is_err()).count();
            eprintln!(
                "{} points, {} failed; results in {}",
                rows.len(),
                failed,
                cfg.output.dir.join(lowvhf::session::SWEEP_FILE).display()
            );
        }
        Command::Analyze {
            tx_log,
            rx_log,
            ref_frames,
            rx_frames,
            out,
        } => {
            let frames = ref_frames.as_deref().zip(rx_frames.as_deref());
            let report = cmd_analyze(&tx_log, &rx_log, frames)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_reports(file, &[report])?;
                }
                None => write_reports(std::io::stdout().lock(), &[report])?,
            }
        }
        Command::GenPattern {
            pattern,
            width,
            height,
            channels,
            frames,
            seed,
            out,
        } => {
            let source = SourceSection {
                pattern: match pattern {
                    PatternArg::Gradient => PatternName::Gradient,
                    PatternArg::Checker => PatternName::Checker,
                    PatternArg::MovingBox => PatternName::MovingBox,
                    PatternArg::Noise => PatternName::Noise,
                },
                pattern_seed: Some(seed),
                ..SourceSection::default()
            };
            let stream = generate_test_pattern(source.pattern(seed), width, height, channels, frames)?;
            write_frames(&out, &stream, (width, height, channels))?;
        }
        Command::Info(args) => {
            print!("{}", pacing_summary(&args.load()?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wh_receiver::channel::{read_iq_csv, to_iq_csv};
use wh_receiver::combiner::Architecture;
use wh_receiver::em::{Detector, EmConfig};
use wh_receiver::error::{Error, Result};
use wh_receiver::harness::decode::{decode_block, parse_channels, synthesize_recording, truth_csv, write_text};
use wh_receiver::harness::{parse_snr_range, run_ser_sweep, write_csv, EstimatorRegistry, RotationMode, Scenario, SweepConfig};

#[derive(Parser)]
#[command(name = "whsim", version, about = "Weight-hybrid receiver simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo symbol-error-rate sweep, written as CSV.
    Sweep(SweepArgs),
    /// Blind EM decode of an IQ CSV recording, written as JSON.
    Decode(DecodeArgs),
    /// Write a synthetic IQ CSV recording and its ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    #[value(name = "whA")]
    WhA,
    #[value(name = "whB")]
    WhB,
    #[value(name = "whC")]
    WhC,
    #[value(name = "whD")]
    WhD,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::WhA => Architecture::WhA,
            ArchArg::WhB => Architecture::WhB,
            ArchArg::WhC => Architecture::WhC,
            ArchArg::WhD => Architecture::WhD,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RotationArg {
    Likelihood,
    Genie,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    /// Nearest constellation point to the calibrated soft estimate.
    MinDistance,
    /// Most probable point under the calibrated parameters.
    MaxPosterior,
}

impl From<DetectorArg> for Detector {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::MinDistance => Detector::MinDistance,
            DetectorArg::MaxPosterior => Detector::MaxPosterior,
        }
    }
}

#[derive(Args)]
struct EmArgs {
    #[arg(long, value_enum, default_value = "min-distance")]
    detector: DetectorArg,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

impl EmArgs {
    fn config(&self) -> EmConfig {
        EmConfig { max_iters: self.max_iters, ..EmConfig::default() }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long)]
    mod_order: usize,
    #[arg(long)]
    block_len: usize,
    /// `start:step:stop` in dB, inclusive, or a single value.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: String,
    #[arg(long)]
    trials: usize,
    /// Registered estimator name (`known` or `em`).
    #[arg(long)]
    estimator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "likelihood")]
    rotation: RotationArg,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Channel layout `NsxNn`.
    #[arg(long)]
    channels: String,
    #[arg(long)]
    mod_order: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long)]
    mod_order: usize,
    #[arg(long)]
    block_len: usize,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Transmitted symbol indices as `t,index` CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
}

fn load_scenario(path: &Option<PathBuf>) -> Result<Scenario> {
    path.as_deref().map(Scenario::from_file).unwrap_or_else(|| Ok(Scenario::default()))
}

fn sweep(args: SweepArgs) -> Result<()> {
    let arch = Architecture::from(args.arch);
    let mut cfg = SweepConfig::new(
        arch,
        args.mod_order,
        args.block_len,
        parse_snr_range(&args.snr_db)?,
        args.trials,
        &args.estimator,
        args.seed,
    );
    cfg.scenario = load_scenario(&args.scenario)?;
    cfg.rotation = match args.rotation {
        RotationArg::Likelihood => RotationMode::Likelihood,
        RotationArg::Genie => RotationMode::Genie,
    };
    if args.threads == Some(0) {
        return Err(Error::InvalidParameter("--threads must be at least 1".into()));
    }
    cfg.threads = args.threads;
    let registry = EstimatorRegistry::with_defaults(args.em.config(), args.em.detector.into());
    let records = run_ser_sweep(&cfg, &registry)?;
    write_csv(&records, &args.out)
}

fn decode(args: DecodeArgs) -> Result<()> {
    let (ns, nn) = parse_channels(&args.channels)?;
    let block = read_iq_csv(&args.input, ns, nn)?;
    let (report, _) = decode_block(&block, args.mod_order, &args.em.config(), args.em.detector.into())?;
    write_text(&args.out, &(report.to_json() + "\n"))
}

fn synth(args: SynthArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let (block, truth) =
        synthesize_recording(&scenario, args.arch.into(), args.mod_order, args.block_len, args.snr_db, args.seed)?;
    write_text(&args.out, &to_iq_csv(&block))?;
    if let Some(path) = &args.truth {
        write_text(path, &truth_csv(&truth))?;
    }
    Ok(())
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
    let result = match cli.cmd {
        Command::Sweep(a) => sweep(a),
        Command::Decode(a) => decode(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("whsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `qsyn`: train, grid, sweep and report commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsyn::experiment::{
    emit_report, load_data, parse_report_csv, render_report, render_sweep, run_combo_grid_on, run_pipeline,
    run_variation_sweep_on, ExperimentSpec, Methods, NetworkKind, ReportFormat,
};
use qsyn::quantizer::QuantizationScheme;
use qsyn::{checkpoint, Error};

#[derive(Parser)]
#[command(name = "qsyn", version, about = "Quantized-synapse training and crossbar experiments")]
struct Cli {
    /// More logging (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method combination and save its checkpoint and scheme.
    Train(TrainArgs),
    /// Run every combination of the selected methods and write a report.
    Grid(GridArgs),
    /// Variation sweep with bias-tuning recovery on a DQ+QR network.
    Sweep(SweepArgs),
    /// Convert a CSV grid report to Markdown or CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Directory with the MNIST IDX files or the CIFAR-10 binary batches.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    network: Option<String>,
    /// Comma-separated subset of dq,qr,bt.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint path; the scheme is written next to it with `.scheme`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    /// Report path; `.md` gives Markdown, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    /// Required for the CIFAR-10 grid, which takes hours.
    #[arg(long)]
    long: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated σ values as multiples of the smallest level.
    #[arg(long)]
    sigma: Option<String>,
    /// Quantized checkpoint to sweep; trained as DQ+QR when omitted.
    #[arg(long, requires = "scheme")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// CSV written by `grid`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Failure category, reported on stderr and mapped to the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Config = 3,
    Data = 4,
    Numeric = 5,
    Io = 6,
    Internal = 1,
}

impl Category {
    fn of(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Levels(_) | Error::MissingLayer(_) | Error::Parse(_) => Category::Config,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::BadFileSize { .. }
            | Error::Checkpoint { .. }
            | Error::LabelOutOfRange { .. }
            | Error::EmptyDataset => Category::Data,
            Error::Diverged { .. } | Error::NonFinite(_) => Category::Numeric,
            Error::Io { .. } => Category::Io,
            Error::Shape(_) | Error::LayerShape { .. } | Error::StaleActivations(_) => Category::Internal,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Data => "data",
            Category::Numeric => "numeric",
            Category::Io => "io",
            Category::Internal => "internal",
        }
    }
}

fn build_spec(c: &Common) -> Result<ExperimentSpec, Error> {
    let text = match &c.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?,
        None => String::new(),
    };
    // the network picks the defaults, so resolve it first
    let from_file = text
        .lines()
        .filter_map(|l| l.split('#').next()?.split_once('='))
        .filter(|(k, _)| k.trim() == "network")
        .map(|(_, v)| v.trim().to_string())
        .last();
    let network: NetworkKind = c.network.clone().or(from_file).as_deref().unwrap_or("lenet").parse()?;
    let mut spec = ExperimentSpec::defaults(network);
    spec.apply_config(&text)?;
    for kv in &c.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        spec.set(k, v)?;
    }
    spec.network = network;
    if let Some(d) = &c.dataset_dir {
        spec.dataset_dir = d.clone();
    }
    if let Some(m) = &c.methods {
        spec.methods = m.parse()?;
    }
    if let Some(s) = c.seed {
        spec.set_seed(s);
    }
    spec.validate()?;
    Ok(spec)
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(a) => {
            let spec = build_spec(&a.common)?;
            let data = load_data(&spec)?;
            let (net, scheme, row, float) = run_pipeline(&spec, &data, None, spec.methods)?;
            checkpoint::save(&net, &a.out)?;
            scheme.save(with_extension(&a.out, ".scheme"))?;
            println!("{}: float {:.2}%, {} {:.2}% (drop {:.2})", spec.network, 100.0 * float, row.label, 100.0 * row.accuracy, 100.0 * row.drop);
        }
        Command::Grid(a) => {
            let spec = build_spec(&a.common)?;
            if spec.network.is_cifar() && !a.long {
                return Err(Error::Config("the CIFAR-10 grid runs for hours; pass --long to confirm".into()));
            }
            let data = load_data(&spec)?;
            let outcome = run_combo_grid_on(&spec, &data, None, &spec.methods.subsets())?;
            emit_report(&outcome.report_rows(), ReportFormat::from_path(&a.out), &a.out)?;
            println!("float {:.2}%", 100.0 * outcome.float_accuracy);
            print!("{}", render_report(&outcome.report_rows(), ReportFormat::Markdown)?);
        }
        Command::Sweep(a) => {
            let mut spec = build_spec(&a.common)?;
            if let Some(s) = &a.sigma {
                spec.set("sigma", s)?;
            }
            let data = load_data(&spec)?;
            let (net, scheme) = match (&a.checkpoint, &a.scheme) {
                (Some(c), Some(s)) => (checkpoint::load(c)?, QuantizationScheme::load(s)?),
                _ => {
                    let (net, scheme, _, _) = run_pipeline(&spec, &data, None, Methods { dq: true, qr: true, bt: false })?;
                    (net, scheme)
                }
            };
            let rows = run_variation_sweep_on(&spec, &data, &net, &scheme)?;
            write(&a.out, &render_sweep(&rows, ReportFormat::from_path(&a.out))?)?;
            print!("{}", render_sweep(&rows, ReportFormat::Markdown)?);
        }
        Command::Report(a) => {
            let text = fs::read_to_string(&a.input).map_err(|e| Error::Io { path: a.input.clone(), source: e })?;
            emit_report(&parse_report_csv(&text)?, ReportFormat::from_path(&a.out), &a.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp_secs().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = Category::of(&e);
            eprintln!("error[{}]: {e}", cat.name());
            ExitCode::from(cat as u8)
        }
    }
}

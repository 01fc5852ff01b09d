use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relnet::experiment::{emit_report, run_experiment, sweep, ExperimentConfig, ExperimentKind, Format};
use relnet::Error;

#[derive(Parser)]
#[command(name = "relnet", version, about = "Relation approximation and attention retrieval experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factored approximation of an asymmetric relation
    ApproxAsym(Common),
    /// Nystrom features of a symmetric kernel
    ApproxSym(Common),
    /// Truncation of an explicit feature-pair series
    FeaturePair(Common),
    /// Monte-Carlo check that attention retrieves the selected element
    AttentionVerify(Common),
    /// Neuron budget formulas
    Budget(Common),
    /// Run the configured experiment once per axis value
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Numeric parameter to vary, or target.<key>
        #[arg(long)]
        axis: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["json", "csv"])]
    format: Option<String>,
    /// Numeric override `key=value`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Record wall-clock milliseconds in the report
    #[arg(long)]
    timing: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Certification { .. } => 3,
        Error::BudgetExceeded { .. } | Error::LandmarkBudget { .. } => 4,
        _ => 1,
    }
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> relnet::Result<ExperimentConfig> {
    let mut cfg = match (&common.config, kind) {
        (Some(path), Some(kind)) => ExperimentConfig::load(path)?.with_kind(kind),
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(kind)) => ExperimentConfig::new(kind),
        (None, None) => return Err(Error::Config("sweep needs --config".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output.path = Some(out.clone());
    }
    if let Some(f) = &common.format {
        cfg.output.format = f.parse()?;
    }
    cfg.output.timing |= common.timing;
    for kv in &common.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("override '{kv}' has a non-numeric value")))?;
        cfg.set(key.trim(), value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> relnet::Result<()> {
    let (common, kind) = match &cli.command {
        Command::ApproxAsym(c) => (c, Some(ExperimentKind::AsymApprox)),
        Command::ApproxSym(c) => (c, Some(ExperimentKind::SymApprox)),
        Command::FeaturePair(c) => (c, Some(ExperimentKind::FeaturePair)),
        Command::AttentionVerify(c) => (c, Some(ExperimentKind::AttentionVerify)),
        Command::Budget(c) => (c, Some(ExperimentKind::BudgetReport)),
        Command::Sweep { common, .. } => (common, None),
    };
    let cfg = load(common, kind)?;
    let rows = match &cli.command {
        Command::Sweep { axis, values, .. } => sweep(&cfg, axis, values)?,
        _ => vec![run_experiment(&cfg)?],
    };
    let format: Format = cfg.output.format;
    emit_report(&rows, format, cfg.output.path.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

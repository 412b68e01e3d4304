use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use photon_ensemble::protocols::Mode;
use photon_ensemble::runner::{
    parse_config_with, resolve_protocol, run, ConfigError, ExperimentConfig, OutputFormat, Overrides, Protocol,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Photon–atomic-ensemble entanglement simulator.
#[derive(Parser)]
#[command(name = "photon-ensemble", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Post-selected entanglement between two ensembles and a Stokes photon.
    Generate(RunArgs),
    /// Heralded atom–photon entanglement through a Bell measurement.
    EventReady(RunArgs),
    /// Teleportation of a photonic qubit into the ensemble pair.
    Memory(RunArgs),
    /// Run one protocol over the values of the [sweep] section.
    Sweep(RunArgs),
    /// Parse and check a config without running anything.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; defaults apply to everything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "PHOTON_ENSEMBLE_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    trials: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for sampled trials (reports do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Include per-trial records in the JSON report.
    #[arg(long)]
    records: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, ConfigError> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: path.display().to_string(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?,
        None => String::new(),
    };
    let overrides = Overrides {
        seed: args.seed,
        mode: args.mode.map(|m| match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Sampled => Mode::Sampled,
        }),
        trials: args.trials,
        out: args.out.clone(),
        format: args.format.map(|f| match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        }),
        records: args.records,
    };
    parse_config_with(&text, &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Command::Generate(a) => (Some(Protocol::Generate), a),
        Command::EventReady(a) => (Some(Protocol::EventReady), a),
        Command::Memory(a) => (Some(Protocol::Memory), a),
        Command::Sweep(a) => (Some(Protocol::Sweep), a),
        Command::Validate(a) => (None, a),
    };
    let cfg = match load(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let Some(command) = command else {
        let protocol = cfg.protocol.map_or("unset", Protocol::as_str);
        let points = cfg.sweep.as_ref().map_or(1, |s| s.values.len());
        println!("ok: protocol {protocol}, mode {}, {points} run point(s)", cfg.run.mode.as_str());
        return ExitCode::SUCCESS;
    };
    let protocol = match resolve_protocol(&cfg, command) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.threads.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let report = match pool.install(|| run(&cfg, protocol)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let text = match cfg.output.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Csv => report.to_csv(),
    };
    match &cfg.output.path {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimalloc::MiMalloc;
use serde_json::{Map, Value};

use semnet::error::{Error, Result};
use semnet::harness::config::{ExperimentConfig, ExperimentKind};
use semnet::harness::experiments::{run_experiment, VERSION};
use semnet::harness::mnist::{resolve_data_dir, DATA_ENV};

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

/// Dataset directory used when neither --data nor the environment names one.
const DEFAULT_DATA: &str = "data/mnist";

#[derive(Parser)]
#[command(name = "semnet", version, about = "Semantic communication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a full-image codec and record its learning curve.
    TrainCodec(Common),
    /// Pretrain a codec, then track it through an SNR schedule in each adaptation mode.
    Drift(Common),
    /// Evaluate receiver-guided partial sampling over source and patch sizes.
    Sampling(Common),
    /// Train the two-timescale orchestrator and its baselines.
    Orchestrate(Common),
    /// Measure pruning and quantization losses on a trained codec.
    Compress(Common),
    /// Plot CSV files and summarise them in one table.
    Report {
        #[command(flatten)]
        common: Common,
        /// CSV files or directories; defaults to the output directory.
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat JSON configuration with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// MNIST directory; overrides the SEMNET_DATA environment variable.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override one setting, e.g. `--set drift.run.epochs=20`. Values are
    /// read as JSON, or as a string when they are not valid JSON.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_config(kind: ExperimentKind, common: &Common, inputs: &[PathBuf]) -> Result<ExperimentConfig> {
    let mut doc = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            match serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))? {
                Value::Object(map) => map,
                _ => return Err(Error::Config("configuration must be a JSON object".into())),
            }
        }
        None => Map::new(),
    };
    match doc.get("experiment") {
        Some(Value::String(tag)) if tag != kind.tag() => {
            return Err(Error::Config(format!(
                "configuration is for {tag:?} but the subcommand is {:?}",
                kind.tag()
            )))
        }
        _ => {
            doc.insert("experiment".into(), kind.tag().into());
        }
    }
    for item in &common.overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {item:?}")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
        doc.insert(key.to_owned(), value);
    }
    if let Some(seed) = common.seed {
        doc.insert("seed".into(), seed.into());
    }
    if let Some(out) = &common.out {
        doc.insert("out".into(), out.to_string_lossy().into_owned().into());
    }
    if !inputs.is_empty() {
        let list = inputs.iter().map(|p| Value::String(p.to_string_lossy().into_owned())).collect();
        doc.insert("report.inputs".into(), Value::Array(list));
    }
    ExperimentConfig::from_flat_json(&Value::Object(doc).to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common, inputs) = match &cli.command {
        Command::TrainCodec(c) => (ExperimentKind::TrainCodec, c, &[][..]),
        Command::Drift(c) => (ExperimentKind::Drift, c, &[][..]),
        Command::Sampling(c) => (ExperimentKind::Sampling, c, &[][..]),
        Command::Orchestrate(c) => (ExperimentKind::Orchestrate, c, &[][..]),
        Command::Compress(c) => (ExperimentKind::Compress, c, &[][..]),
        Command::Report { common, inputs } => (ExperimentKind::Report, common, &inputs[..]),
    };
    let config = match build_config(kind, common, inputs) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("semnet: {e}");
            return ExitCode::from(2);
        }
    };
    let data = resolve_data_dir(common.data.as_deref(), Path::new(DEFAULT_DATA));
    eprintln!(
        "{VERSION}: {} seed {} -> {} (data: {}, override with --data or {DATA_ENV})",
        kind.tag(),
        config.seed,
        config.out.display(),
        data.display()
    );
    match run_experiment(&config, &data) {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("semnet: {} error: {e}", e.kind());
            eprintln!("error record: {}", config.out.join("error.json").display());
            ExitCode::FAILURE
        }
    }
}

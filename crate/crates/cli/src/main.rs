//! Batch command-line surface: detect, select, predict, evaluate and
//! the synthetic error-injection harness.
//!
//! Exit codes: 0 success, 2 validation error (arguments, config, file
//! formats), 3 degenerate data (empty tables, single-label training and
//! similar dead ends).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boostclean_core::boost::{self, BoostError};
use boostclean_core::config::ConfigError;
use boostclean_core::detect::DetectError;
use boostclean_core::inject;
use boostclean_core::model::ModelError;
use boostclean_core::pipeline::{self, PipelineError};
use boostclean_core::table::{self, LoadOptions, Table, TableError, Value};
use boostclean_core::Config;

#[derive(Parser)]
#[command(name = "boostclean", version, about = "Detect data errors and select budgeted repairs by boosting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML configuration file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Repair budget B (number of boosting rounds).
    #[arg(long)]
    budget: Option<usize>,
    /// Worker threads for candidate building (1 = sequential).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_file(path).map_err(CliError::from)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(budget) = self.budget {
            cfg.budget = budget;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        cfg.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the detector library and report per-predicate hits.
    Detect {
        /// Input CSV with a header row.
        input: PathBuf,
        /// Label column to exclude from detection.
        #[arg(long)]
        label: Option<String>,
        /// Report destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full pipeline and deploy the selected ensemble.
    Select {
        input: PathBuf,
        /// Label column to predict.
        #[arg(long)]
        label: String,
        /// Deployed model destination.
        #[arg(long)]
        out: PathBuf,
        /// Selection report destination (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Label a CSV with a deployed model.
    Predict {
        /// Deployed model from `select`.
        #[arg(long)]
        model: PathBuf,
        /// Input CSV; must have the same columns as the training data.
        input: PathBuf,
        /// Labeled CSV destination (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a deployed model against a labeled CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plant synthetic errors and emit the ground truth.
    Inject {
        /// Clean input CSV.
        input: PathBuf,
        /// Injection spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Label column (needed for label-correlated injection).
        #[arg(long)]
        label: Option<String>,
        /// Dirty CSV destination.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth JSON destination.
        #[arg(long)]
        truth: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum CliError {
    /// Bad arguments, config, or file formats: exit code 2.
    Validation(String),
    /// Structurally valid input the pipeline cannot work with: exit 3.
    Degenerate(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Empty
            | TableError::AllLabelsMissing
            | TableError::InsufficientRows
            | TableError::NoLabels => CliError::Degenerate(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::TooFewRows(_) | ModelError::SingleLabel | ModelError::ZeroFeatures => {
                CliError::Degenerate(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<BoostError> for CliError {
    fn from(e: BoostError) -> Self {
        match e {
            BoostError::NoCandidates | BoostError::NoLabels | BoostError::NotBinary(_) => {
                CliError::Degenerate(e.to_string())
            }
            BoostError::Model(m) => CliError::from(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::EmptyTable => CliError::Degenerate(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Table(t) => t.into(),
            PipelineError::Detect(d) => d.into(),
            PipelineError::Boost(b) => b.into(),
            PipelineError::Model(m) => m.into(),
        }
    }
}

impl From<inject::InjectError> for CliError {
    fn from(e: inject::InjectError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Degenerate(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_table(path: &Path, label: Option<&str>, cfg: &Config) -> Result<Table, CliError> {
    let (raw, _report) = table::load_csv(path, &LoadOptions::with_header(None))?;
    Ok(pipeline::prepare(raw, label, cfg)?)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Detect {
            input,
            label,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            let table = load_table(&input, label.as_deref(), &cfg)?;
            let (_, report) = pipeline::run_detect(&table, &cfg)?;
            write_json(&report, out.as_deref())
        }
        Command::Select {
            input,
            label,
            out,
            report,
            common,
        } => {
            let cfg = common.resolve()?;
            let table = load_table(&input, Some(&label), &cfg)?;
            let output = pipeline::run_select(&table, &cfg)?;
            boost::deploy(&output.ensemble, &out)?;
            if let Some(report_path) = report {
                write_json(&output.selection_report, Some(&report_path))?;
            }
            Ok(())
        }
        Command::Predict { model, input, out } => {
            let ensemble = boost::load_deployed(&model)?;
            let mut writer: Box<dyn std::io::Write> = match &out {
                Some(path) => Box::new(std::fs::File::create(path)?),
                None => Box::new(std::io::stdout()),
            };
            let mut csv_out = csv::Writer::from_writer(&mut writer);
            match table::load_csv(&input, &LoadOptions::with_header(None)) {
                Ok((raw, _)) => {
                    let mut header: Vec<String> = raw
                        .schema
                        .columns
                        .iter()
                        .map(|c| c.name.clone())
                        .collect();
                    header.push("prediction".into());
                    csv_out.write_record(&header).map_err(io_like)?;
                    for rec in &raw.records {
                        let label = boost::ensemble_predict(&ensemble, rec);
                        let mut row: Vec<String> =
                            rec.values.iter().map(Value::to_csv_field).collect();
                        row.push(label.to_csv_field());
                        csv_out.write_record(&row).map_err(io_like)?;
                    }
                }
                // no data rows: emit the header alone
                Err(TableError::Empty) => {
                    let mut reader = csv::Reader::from_path(&input).map_err(io_like)?;
                    let mut header: Vec<String> = reader
                        .headers()
                        .map_err(io_like)?
                        .iter()
                        .map(String::from)
                        .collect();
                    header.push("prediction".into());
                    csv_out.write_record(&header).map_err(io_like)?;
                }
                Err(e) => return Err(e.into()),
            }
            csv_out.flush()?;
            Ok(())
        }
        Command::Evaluate {
            model,
            input,
            label,
            out,
        } => {
            let ensemble = boost::load_deployed(&model)?;
            let cfg = Config::default();
            let table = load_table(&input, Some(&label), &cfg)?;
            if !table.records.iter().any(|r| r.label.is_some()) {
                return Err(CliError::Degenerate(
                    "evaluation set has no labels".into(),
                ));
            }
            let metrics = pipeline::evaluate(&ensemble, &table);
            write_json(&metrics, out.as_deref())
        }
        Command::Inject {
            input,
            spec,
            label,
            out,
            truth,
            seed,
        } => {
            let cfg = Config::default();
            let table = load_table(&input, label.as_deref(), &cfg)?;
            let text = std::fs::read_to_string(&spec)?;
            let mut spec: inject::InjectionSpec = serde_json::from_str(&text)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let (dirty, ground_truth) = inject::inject(&table, &spec)?;
            table::write_csv(&dirty, &out)?;
            write_json(&ground_truth, Some(&truth))
        }
    }
}

fn io_like(e: csv::Error) -> CliError {
    CliError::Validation(e.to_string())
}

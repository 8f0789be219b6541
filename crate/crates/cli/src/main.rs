//! `grabnel`: generate data, train and serve a victim, run attack campaigns
//! and summarise their traces.

mod options;

use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use grabnel_core::data::{generate_er_dataset, parse_tudataset, DataError, ErGenConfig, LabeledDataset};
use grabnel_core::harness::{
    adversarial_pattern_stats, export_adversarial_graph, load_traces, run_campaign, write_campaign, HarnessError,
};
use grabnel_core::victim::{
    accuracy, serve, serve_tcp, train_gcn, ExternalVictim, ExternalVictimOptions, GcnVictim, GcnWeights, InputEncoding,
    ScoreKind, TrainConfig, VictimError, VictimModel,
};
use serde::Serialize;
use thiserror::Error;

use options::{AttackArgs, ScoreKindArg};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing required option --{0}")]
    Missing(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Victim(#[from] VictimError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("output: {0}")]
    Output(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "grabnel", version, about = "Black-box adversarial attacks on graph classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate the Erdős–Rényi component-count dataset.
    GenData(GenDataArgs),
    /// Train the built-in GCN victim on a dataset.
    TrainVictim(TrainArgs),
    /// Answer victim queries for a weights file on stdio or TCP.
    ServeVictim(ServeArgs),
    /// Attack every correctly classified graph of a dataset.
    Attack(AttackArgs),
    /// Structural statistics of the successful attacks in a trace directory.
    Stats(StatsArgs),
}

#[derive(Debug, clap::Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1500)]
    size: usize,
    #[arg(long, default_value_t = 15)]
    min_nodes: usize,
    #[arg(long, default_value_t = 20)]
    max_nodes: usize,
    /// Component counts, one class each.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    components: Vec<usize>,
    #[arg(long, default_value_t = 0.4)]
    edge_probability: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncodingArg {
    NodeData,
    Degree,
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Dataset JSON file or TU-format directory.
    #[arg(long)]
    data: PathBuf,
    /// Where the trained weights are written.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    hidden_dim: usize,
    #[arg(long, value_enum, default_value = "node-data")]
    encoding: EncodingArg,
    /// Degree clip for `--encoding degree`.
    #[arg(long, default_value_t = 15)]
    max_degree: usize,
    /// One-hot width for labelled nodes; inferred when absent.
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Listen on this address instead of stdio. Port 0 picks a free port.
    #[arg(long)]
    tcp: Option<String>,
}

#[derive(Debug, clap::Args)]
struct StatsArgs {
    /// Campaign output directory or a directory of trace files.
    dir: PathBuf,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an annotated adversarial graph per success into this directory.
    #[arg(long)]
    export: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(io_err(Path::new("<stdout>")))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    if path.is_dir() {
        Ok(parse_tudataset(path)?)
    } else {
        Ok(LabeledDataset::load_json(path)?)
    }
}

fn gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let cfg = ErGenConfig {
        min_nodes: a.min_nodes,
        max_nodes: a.max_nodes,
        component_range: a.components,
        edge_probability: a.edge_probability,
        seed: a.seed,
        validation_fraction: a.validation_fraction,
        test_fraction: a.test_fraction,
    };
    let ds = generate_er_dataset(&cfg, a.size)?;
    ds.save_json(&a.out)?;
    eprintln!(
        "wrote {} graphs ({} train, {} validation, {} test) to {}",
        ds.len(),
        ds.split.train.len(),
        ds.split.validation.len(),
        ds.split.test.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    epochs: usize,
    final_loss: Option<f64>,
    train_accuracy: Option<f64>,
    validation_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
}

fn train_victim(a: TrainArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        hidden_dim: a.hidden_dim,
        encoding: match a.encoding {
            EncodingArg::NodeData => InputEncoding::NodeData,
            EncodingArg::Degree => InputEncoding::Degree { max_degree: a.max_degree },
        },
        input_dim: a.input_dim,
        seed: a.seed,
    };
    let trained = train_gcn(&ds, &cfg)?;
    trained.weights.save_json(&a.out).map_err(io_err(&a.out))?;
    let test = ds.subset(&ds.split.test);
    let last = trained.history.last();
    print_json(&TrainReport {
        epochs: trained.history.len(),
        final_loss: last.map(|s| s.loss),
        train_accuracy: last.map(|s| s.train_accuracy),
        validation_accuracy: trained.final_validation_accuracy(),
        test_accuracy: if test.is_empty() { None } else { Some(accuracy(&trained.weights, &test)?) },
    })
}

fn serve_victim(a: ServeArgs) -> Result<(), CliError> {
    let weights = Arc::new(GcnWeights::load_json(&a.weights)?);
    match a.tcp {
        None => {
            let mut model = GcnVictim::new(weights);
            serve(&mut model, io::stdin().lock(), io::stdout().lock()).map_err(io_err(Path::new("<stdio>")))?;
        }
        Some(addr) => {
            let listener = TcpListener::bind(&addr).map_err(io_err(Path::new(&addr)))?;
            let local = listener.local_addr().map_err(io_err(Path::new(&addr)))?;
            eprintln!("listening on {local}");
            serve_tcp(listener, move || GcnVictim::new(weights.clone())).map_err(io_err(Path::new(&addr)))?;
        }
    }
    Ok(())
}

fn attack(args: AttackArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let data = args.data.clone().ok_or(CliError::Missing("data"))?;
    let out = args.out.clone().ok_or(CliError::Missing("out"))?;
    let ds = load_dataset(&data)?;
    let campaign = args.campaign();
    let options = ExternalVictimOptions {
        timeout: args.timeout.map_or(ExternalVictimOptions::default().timeout, Duration::from_secs_f64),
        kind: match args.score_kind {
            Some(ScoreKindArg::Logits) => ScoreKind::Logits,
            _ => ScoreKind::Probabilities,
        },
    };
    let output = if let Some(path) = &args.weights {
        let weights = Arc::new(GcnWeights::load_json(path)?);
        let factory =
            move || -> Result<Box<dyn VictimModel>, VictimError> { Ok(Box::new(GcnVictim::new(weights.clone()))) };
        run_campaign(&campaign, &ds, &factory)?
    } else if let Some(program) = &args.victim_cmd {
        let extra = args.victim_arg.clone().unwrap_or_default();
        let factory = move || -> Result<Box<dyn VictimModel>, VictimError> {
            let victim = ExternalVictim::spawn(Command::new(program).args(&extra), options)?;
            Ok(Box::new(victim))
        };
        run_campaign(&campaign, &ds, &factory)?
    } else if let Some(addr) = &args.victim_tcp {
        let factory = move || -> Result<Box<dyn VictimModel>, VictimError> {
            Ok(Box::new(ExternalVictim::connect_tcp(addr.as_str(), options)?))
        };
        run_campaign(&campaign, &ds, &factory)?
    } else {
        return Err(CliError::Missing("weights, --victim-cmd or --victim-tcp"));
    };
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    write_campaign(&output, &out)?;
    let s = &output.summary;
    eprintln!(
        "{}: {}/{} eligible graphs fooled (ASR {:.3}), clean accuracy {:.3}, post-attack accuracy {:.3}",
        s.attacker.name(),
        s.successes,
        s.eligible,
        s.asr,
        s.clean_accuracy,
        s.post_attack_accuracy
    );
    print_json(s)
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let results = load_traces(&a.dir)?;
    let report = adversarial_pattern_stats(&results)?;
    if let Some(path) = &a.out {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        std::fs::write(path, text).map_err(io_err(path))?;
    }
    if let Some(dir) = &a.export {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (i, r) in results.iter().enumerate().filter(|(_, r)| r.success) {
            export_adversarial_graph(r, dir, &format!("success_{i:05}"))?;
        }
    }
    print_json(&report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::GenData(a) => gen_data(a),
        Cmd::TrainVictim(a) => train_victim(a),
        Cmd::ServeVictim(a) => serve_victim(a),
        Cmd::Attack(a) => attack(a),
        Cmd::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

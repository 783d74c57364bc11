use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use interlend_core::clock::SystemClock;
use interlend_core::ledger::{compare_scenarios, ScenarioInputs};
use interlend_core::request::Actor;
use interlend_node::sim::{run_simulation, Scenario};
use interlend_node::{Node, NodeConfig, NodeError};

#[derive(Parser)]
#[command(name = "interlend", version, about = "Interlibrary loan node, simulator and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run or maintain a node.
    #[command(subcommand)]
    Node(NodeCommand),
    /// Multi-node simulation.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Offline reports.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum NodeCommand {
    /// Serve the HTTP API.
    Serve(ConfigArg),
    /// Merge a holdings CSV into the node's log. Run while the node is stopped.
    IngestHoldings {
        csv: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Merge a licence CSV into the node's log.
    IngestLicences {
        csv: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Load evidence-based acquisition usage rows.
    IngestUsage {
        csv: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Print the JSON report of one seeded run.
    Run {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        nodes: usize,
        #[arg(long, default_value_t = 200)]
        requests: usize,
        /// JSON scenario; missing fields take their defaults.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Yearly cost with and without free reciprocal lending.
    CostComparison {
        inputs: PathBuf,
        #[arg(long)]
        csv: bool,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, NodeError> {
    let text = std::fs::read_to_string(path).map_err(|e| NodeError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| NodeError::ConfigInvalid(format!("{}: {e}", path.display())))
}

fn open_node(config: &Path) -> Result<Node, NodeError> {
    Node::open(NodeConfig::load(config)?, Arc::new(SystemClock))
}

fn ingest(csv: &Path, config: &Path, what: &str, f: impl Fn(&Node, File) -> Result<usize, NodeError>) -> Result<(), NodeError> {
    let node = open_node(config)?;
    let file = File::open(csv).map_err(|e| NodeError::Io(format!("{}: {e}", csv.display())))?;
    let n = f(&node, file)?;
    node.write_snapshot()?;
    println!("{n} {what} loaded into {}", node.id());
    Ok(())
}

fn run(cli: Cli) -> Result<(), NodeError> {
    match cli.command {
        Command::Node(NodeCommand::Serve(c)) => {
            let node = Arc::new(open_node(&c.config)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(interlend_node::http::serve(node))
        }
        Command::Node(NodeCommand::IngestHoldings { csv, config }) => {
            ingest(&csv, &config.config, "holdings", |n, f| n.ingest_holdings(f, &Actor::System))
        }
        Command::Node(NodeCommand::IngestLicences { csv, config }) => {
            ingest(&csv, &config.config, "licences", |n, f| n.ingest_licences(f, &Actor::System))
        }
        Command::Node(NodeCommand::IngestUsage { csv, config }) => {
            ingest(&csv, &config.config, "usage rows", |n, f| n.ingest_usage(f, &Actor::System))
        }
        Command::Sim(SimCommand::Run { seed, nodes, requests, scenario }) => {
            let scenario = match scenario {
                Some(p) => read_json(&p)?,
                None => Scenario::default(),
            };
            let report = run_simulation(seed, nodes, requests, &scenario)?;
            println!("{}", report.to_json());
            Ok(())
        }
        Command::Report(ReportCommand::CostComparison { inputs, csv }) => {
            let inputs: ScenarioInputs = read_json(&inputs)?;
            let report = compare_scenarios(&inputs)?;
            if csv {
                print!("{}", report.to_csv_string());
            } else {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use trajql_core::model::{Metrics, ModelSpec};
use trajql_core::subgroup::RankingCriteria;
use trajql_core::value::format_number;
use trajql_workbench::api::{self, to_json};
use trajql_workbench::dataset::{write_dataset, DatasetConfig};
use trajql_workbench::error::ErrorClass;
use trajql_workbench::jobs::{JobManager, DEFAULT_WORKERS};
use trajql_workbench::workspace::{no_progress, MineRequest, PreviewRequest};
use trajql_workbench::{fixtures, WorkbenchError, Workspace};

#[derive(Parser)]
#[command(name = "trajql", version, about = "Query, model and slice trajectory data")]
struct Cli {
    /// Directory holding datasets, specs, models and jobs.
    #[arg(long, global = true, env = "TRAJQL_DATA_DIR", default_value = "trajql-data")]
    data_dir: PathBuf,
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a dataset from a JSON configuration.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// List loaded datasets.
    Datasets,
    /// Evaluate a query.
    Query {
        #[arg(long)]
        dataset: Option<String>,
        #[arg(short = 'e', long = "expr")]
        expr: String,
        /// Print the result profile instead of rows.
        #[arg(long, conflicts_with = "head")]
        profile: bool,
        #[arg(long)]
        head: Option<usize>,
        /// Timestep definition for queries that use `#now` without `at`.
        #[arg(long)]
        timesteps: Option<String>,
    },
    /// Train a model from a spec file. The file may name its dataset in a
    /// top-level `dataset` key.
    Train {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        dataset: Option<String>,
        /// Write train/val/test design matrices as CSV.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Mine subgroups of a trained model.
    Subgroups {
        #[arg(long)]
        model: String,
        /// Ranking criteria, or a full mining request without `model`.
        #[arg(long)]
        criteria: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "TRAJQL_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "TRAJQL_HOST", default_value = "127.0.0.1")]
        host: String,
        /// Concurrent jobs.
        #[arg(long, env = "TRAJQL_WORKERS", default_value_t = DEFAULT_WORKERS)]
        workers: usize,
        /// Dataset configurations to ingest at startup.
        #[arg(long = "dataset", env = "TRAJQL_DATASET")]
        datasets: Vec<PathBuf>,
    },
    /// Write a synthetic dataset and a matching spec file to a directory.
    Fixture {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(fixtures::FIXTURES))]
        name: String,
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_json_file(path: &Path) -> Result<serde_json::Value, WorkbenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| WorkbenchError::Invalid(format!("{}: {}", path.display(), e)))?;
    serde_json::from_str(&text).map_err(|e| WorkbenchError::Invalid(format!("{}: {}", path.display(), e)))
}

fn from_value<T: serde::de::DeserializeOwned>(path: &Path, v: serde_json::Value) -> Result<T, WorkbenchError> {
    serde_json::from_value(v).map_err(|e| WorkbenchError::Invalid(format!("{}: {}", path.display(), e)))
}

fn pick_dataset(ws: &Workspace, named: Option<String>) -> Result<String, WorkbenchError> {
    if let Some(n) = named {
        return Ok(n);
    }
    let all = ws.datasets();
    match all.as_slice() {
        [one] => Ok(one.name.clone()),
        [] => Err(WorkbenchError::Invalid("no datasets loaded; run `trajql ingest` first".into())),
        _ => Err(WorkbenchError::Invalid("several datasets are loaded; pass --dataset".into())),
    }
}

fn print_caret(source: &str, offset: usize) {
    let col = source[..offset.min(source.len())].chars().count();
    eprintln!("  {}", source);
    eprintln!("  {}^", " ".repeat(col));
}

fn metric_line(m: &Metrics) -> String {
    match m {
        Metrics::Binary(b) => format!("auroc {}", b.auroc.map_or("-".into(), format_number)),
        Metrics::Multiclass(c) => format!("macro auroc {}", c.macro_auroc.map_or("-".into(), format_number)),
        Metrics::Regression(r) => format!("r2 {}", r.r2.map_or("-".into(), format_number)),
    }
}

fn run(cli: Cli) -> Result<(), WorkbenchError> {
    let json = cli.json;
    let ws = Arc::new(Workspace::open(&cli.data_dir)?);
    match cli.command {
        Command::Ingest { config } => {
            let summary = ws.ingest(DatasetConfig::read(&config)?)?;
            if json {
                println!("{}", to_json(&summary));
            } else {
                println!(
                    "{}: {} trajectories, {} fields (train {}, val {}, test {})",
                    summary.name,
                    summary.trajectories,
                    summary.fields.len(),
                    summary.splits.train,
                    summary.splits.val,
                    summary.splits.test
                );
            }
        }
        Command::Datasets => {
            let all = ws.datasets();
            if json {
                println!("{}", to_json(&all));
            } else {
                for d in all {
                    println!("{}\t{} trajectories\t{} fields", d.name, d.trajectories, d.fields.len());
                }
            }
        }
        Command::Query { dataset, expr, profile, head, timesteps } => {
            let dataset = pick_dataset(&ws, dataset)?;
            let req = PreviewRequest { dataset, query: expr.clone(), timesteps, head };
            let out = ws.preview(&req).inspect_err(|e| {
                if let Some(offset) = e.offset() {
                    print_caret(&expr, offset);
                }
            })?;
            if json {
                println!("{}", to_json(&out));
            } else if profile {
                let p = &out.profile;
                println!("{}  {} {}  {} rows over {} trajectories", out.canonical, out.kind.name(), out.dtype, p.rows, p.trajectories);
                println!("missing {} ({:.1}%)", p.missing, p.missingness * 100.0);
                println!("{}", serde_json::to_string_pretty(&p.distribution).expect("serializes"));
            } else {
                println!("trajectory_id\ttime\tvalue");
                for r in &out.sample {
                    let time = match (r.time, r.start, r.end) {
                        (Some(t), _, _) => format_number(t),
                        (None, Some(s), Some(e)) => format!("{}..{}", format_number(s), format_number(e)),
                        _ => String::new(),
                    };
                    let value = r.value.as_ref().map_or("".into(), |v| match v {
                        trajql_core::Scalar::Number(x) => format_number(*x),
                        other => other.label(),
                    });
                    println!("{}\t{}\t{}", r.trajectory_id, time, value);
                }
                if out.rows > out.sample.len() {
                    println!("... {} rows in total", out.rows);
                }
            }
        }
        Command::Train { spec, dataset, export } => {
            let mut value = read_json_file(&spec)?;
            let named = value.as_object_mut().and_then(|o| o.remove("dataset")).and_then(|d| d.as_str().map(String::from));
            let model_spec: ModelSpec = from_value(&spec, value)?;
            let dataset = pick_dataset(&ws, dataset.or(named))?;
            let record = ws.train(&dataset, &model_spec, None, &no_progress)?;
            if let Some(dir) = export {
                for p in ws.export_model(&record.id, &dir)? {
                    log::info!("wrote {}", p.display());
                }
            }
            let metrics = record.metrics();
            if json {
                println!("{}", to_json(&metrics));
            } else {
                println!("model {} ({})", record.id, record.spec.name);
                println!("validation: {}", metric_line(&metrics.metrics.val));
                println!("test:       {}", metric_line(&metrics.metrics.test));
                for imp in metrics.variable_importances.iter().take(5) {
                    println!("  {:<24} {:.3}", imp.name, imp.importance);
                }
                for alert in &metrics.alerts {
                    println!("alert: {}", serde_json::to_string(alert).expect("serializes"));
                }
            }
        }
        Command::Subgroups { model, criteria } => {
            let value = read_json_file(&criteria)?;
            let request = if value.get("criteria").is_some() {
                let mut value = value;
                value["model"] = serde_json::Value::String(model);
                from_value::<MineRequest>(&criteria, value)?
            } else {
                let criteria = from_value::<RankingCriteria>(&criteria, value)?;
                MineRequest {
                    model,
                    models: Vec::new(),
                    criteria,
                    params: Default::default(),
                    scope: Default::default(),
                    seed: 0,
                    features: Vec::new(),
                }
            };
            let run = ws.mine(&request, &no_progress)?;
            if json {
                println!("{}", to_json(&*run));
            } else {
                println!("run {}: {} discovery rows, {} evaluation rows", run.id, run.discovery_rows, run.evaluation_rows);
                for r in &run.reports {
                    let rate = r.evaluation.rate.map_or("-".into(), |x| format!("{:.3}", x));
                    let overall = r.evaluation.overall_rate.map_or("-".into(), |x| format!("{:.3}", x));
                    println!("{:>8.3}  n={:<6} rate {} vs {}  {}", r.score, r.evaluation.extent, rate, overall, r.label);
                }
            }
        }
        Command::Serve { port, host, workers, datasets } => {
            for path in datasets {
                let s = ws.ingest(DatasetConfig::read(&path)?)?;
                log::info!("loaded dataset {} ({} trajectories)", s.name, s.trajectories);
            }
            let addr: SocketAddr = format!("{}:{}", host, port)
                .parse()
                .map_err(|e| WorkbenchError::Invalid(format!("bad address {}:{}: {}", host, port, e)))?;
            let jobs = Arc::new(JobManager::start(ws, workers));
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(WorkbenchError::internal)?;
            rt.block_on(api::serve(jobs.clone(), addr))
                .map_err(|e| WorkbenchError::Invalid(format!("cannot serve on {}: {}", addr, e)))?;
            jobs.shutdown();
        }
        Command::Fixture { name, dir, seed } => {
            let fixture = fixtures::by_name(&name, seed).expect("clap checked the name");
            let config = write_dataset(&fixture.store, &dir)?;
            let mut spec = serde_json::to_value(&fixture.spec).expect("serializes");
            spec["dataset"] = serde_json::Value::String(config.name.clone());
            std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec).expect("serializes"))
                .map_err(|e| WorkbenchError::Invalid(format!("{}: {}", dir.display(), e)))?;
            if json {
                println!("{}", to_json(&config));
            } else {
                println!("wrote {} to {}", name, dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let json = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                println!("{}", to_json(&e.body()));
            }
            eprintln!("error: {}", e);
            ExitCode::from(if e.class() == ErrorClass::Internal { 2 } else { 1 })
        }
    }
}

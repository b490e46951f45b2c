//! `conclave`: run debates over task batches, replay scripted scenarios,
//! and report analytics. The CLI is a client of the debate service: it
//! talks to `--server <url>` when given, otherwise it spins up an
//! in-process instance on a loopback port.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conclave_client::types::{BatchRequest, ReportRequest, SimulateRequest, TaskOutcome};
use conclave_client::Client;
use conclave_core::analytics::{batch_analytics, BatchAnalytics};
use conclave_core::config::{BackendKind, RunConfig};
use conclave_core::engine::{parse_lines, write_lines, DebateTranscript};
use conclave_core::model::TaskInput;

#[derive(Parser)]
#[command(
    name = "conclave",
    version,
    about = "Uncertainty-driven multi-agent debate runner"
)]
struct Cli {
    /// Debate service to talk to; when absent an in-process instance is
    /// started on a loopback port.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of tasks and write one transcript per task plus a
    /// batch summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Line-delimited JSON task records.
        #[arg(long)]
        tasks: PathBuf,
        /// Override a configuration key, e.g. --set beta_weight=2.0
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Replay a scripted scenario and print its round-by-round trace.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Aggregate analytics over a directory of transcripts.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Confidence bins for the calibration error.
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// System-uncertainty threshold for the high-uncertainty flag.
        #[arg(long, default_value_t = 0.5)]
        ua_threshold: f64,
    },
}

/// Exit codes: 0 success, 1 usage/config error, 2 runtime abort.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the same channel
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let client = match connect(cli.server).await {
        Ok(client) => client,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.code());
        }
    };

    let result = match cli.command {
        Command::Run { config, tasks, set } => cmd_run(&client, &config, &tasks, &set).await,
        Command::Simulate { scenario } => cmd_simulate(&client, &scenario).await,
        Command::Report {
            dir,
            bins,
            ua_threshold,
        } => cmd_report(&client, &dir, bins, ua_threshold).await,
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

async fn connect(server: Option<String>) -> Result<Client, CliError> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => {
            let addr = conclave_server::spawn("127.0.0.1:0")
                .await
                .map_err(|e| runtime(format!("cannot start embedded service: {e}")))?;
            Ok(Client::new(format!("http://{addr}")))
        }
    }
}

fn read_tasks(path: &Path) -> Result<Vec<TaskInput>, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read tasks file {}: {e}", path.display())))?;
    let mut tasks = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: TaskInput = serde_json::from_str(line)
            .map_err(|e| usage(format!("tasks file line {}: {e}", idx + 1)))?;
        task.validate()
            .map_err(|e| usage(format!("tasks file line {}: {e}", idx + 1)))?;
        tasks.push(task);
    }
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    ids.sort_unstable();
    let count = ids.len();
    ids.dedup();
    if ids.len() != count {
        return Err(usage("task_id values must be unique within a batch"));
    }
    Ok(tasks)
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .map_err(|e| runtime(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| runtime(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

#[derive(serde::Serialize)]
struct TaskSummary {
    task_id: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    termination: Option<String>,
    rounds: u32,
    final_answer: String,
    token_cost: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(serde::Serialize)]
struct BatchSummary {
    n_tasks: usize,
    n_succeeded: usize,
    n_failed: usize,
    tasks: Vec<TaskSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytics: Option<BatchAnalytics>,
}

async fn cmd_run(
    client: &Client,
    config_path: &Path,
    tasks_path: &Path,
    overrides: &[String],
) -> Result<(), CliError> {
    let mut config = RunConfig::load(config_path).map_err(usage)?;
    for entry in overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| usage(format!("override {entry:?} is not KEY=VALUE")))?;
        config
            .apply_override(key.trim(), value.trim())
            .map_err(usage)?;
    }
    config.validate().map_err(usage)?;
    let tasks = read_tasks(tasks_path)?;

    let fixture_inline = match config.backend {
        BackendKind::Scripted => {
            let path = config.scripted.fixture.as_ref().expect("validated");
            Some(
                std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read fixture {}: {e}", path.display())))?,
            )
        }
        BackendKind::Http => None,
    };

    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| runtime(format!("cannot create output dir: {e}")))?;

    let outcomes: Vec<TaskOutcome> = if tasks.is_empty() {
        Vec::new()
    } else {
        client
            .run_batch(&BatchRequest {
                tasks: tasks.clone(),
                config: Some(config.clone()),
                fixture_inline,
            })
            .await
            .map_err(runtime)?
            .outcomes
    };

    let mut task_rows = Vec::new();
    let mut transcripts = Vec::new();
    let mut failed = 0usize;
    for outcome in &outcomes {
        match (&outcome.transcript, &outcome.error) {
            (Some(transcript), _) => {
                let file = config
                    .output_dir
                    .join(format!("{}.transcript.jsonl", outcome.task_id));
                write_atomic(&file, &write_lines(transcript))?;
                let state = transcript.final_state();
                task_rows.push(TaskSummary {
                    task_id: outcome.task_id.clone(),
                    status: "ok",
                    termination: state
                        .termination
                        .map(|r| conclave_core::analytics::reason_key(r).to_string()),
                    rounds: transcript.debate_rounds(),
                    final_answer: transcript.final_answer.clone(),
                    token_cost: transcript.total_token_cost,
                    correct: transcript.task.ground_truth.as_ref().map(|truth| {
                        conclave_core::consensus::normalize_answer(&transcript.final_answer)
                            == conclave_core::consensus::normalize_answer(truth)
                    }),
                    error: None,
                });
                transcripts.push(transcript.clone());
            }
            (None, error) => {
                failed += 1;
                task_rows.push(TaskSummary {
                    task_id: outcome.task_id.clone(),
                    status: "failed",
                    termination: None,
                    rounds: 0,
                    final_answer: String::new(),
                    token_cost: 0,
                    correct: None,
                    error: error
                        .clone()
                        .or_else(|| Some("unknown failure".to_string())),
                });
            }
        }
    }

    let analytics = if transcripts.is_empty() {
        None
    } else {
        Some(batch_analytics(&transcripts, 10, 0.5).map_err(runtime)?)
    };
    let summary = BatchSummary {
        n_tasks: tasks.len(),
        n_succeeded: tasks.len() - failed,
        n_failed: failed,
        tasks: task_rows,
        analytics,
    };
    let summary_json =
        serde_json::to_string_pretty(&summary).map_err(|e| runtime(e.to_string()))?;
    write_atomic(&config.output_dir.join("summary.json"), &summary_json)?;

    println!(
        "{} tasks, {} succeeded, {} failed; transcripts in {}",
        summary.n_tasks,
        summary.n_succeeded,
        summary.n_failed,
        config.output_dir.display()
    );
    for row in &summary.tasks {
        match row.status {
            "ok" => println!(
                "  {}: {} after {} debate round(s) -> {:?} [{} tokens]",
                row.task_id,
                row.termination.as_deref().unwrap_or("?"),
                row.rounds,
                row.final_answer,
                row.token_cost
            ),
            _ => println!(
                "  {}: FAILED ({})",
                row.task_id,
                row.error.as_deref().unwrap_or("unknown")
            ),
        }
    }

    if failed > 0 {
        Err(runtime(format!("{failed} task(s) aborted")))
    } else {
        Ok(())
    }
}

async fn cmd_simulate(client: &Client, scenario: &Path) -> Result<(), CliError> {
    let raw = std::fs::read_to_string(scenario)
        .map_err(|e| usage(format!("cannot read scenario {}: {e}", scenario.display())))?;
    let response = client
        .simulate(&SimulateRequest {
            scenario_inline: Some(raw),
            scenario_path: None,
            config: None,
        })
        .await
        .map_err(|e| match e {
            conclave_client::ClientError::Api {
                status: 400,
                message,
            } => usage(message),
            other => runtime(other),
        })?;

    for row in &response.trace {
        println!(
            "round {}: U_sys={:.4} conflict={:.4} disputes={}{}",
            row.round,
            row.system_uncertainty,
            row.conflict_score,
            row.dispute_count,
            row.termination
                .map(|r| format!(" termination={}", conclave_core::analytics::reason_key(r)))
                .unwrap_or_default()
        );
        for agent in &row.agents {
            println!(
                "  {:<22} w={:.4} U={:.4}",
                agent.agent_id, agent.weight, agent.uncertainty
            );
        }
        println!("  answer: {}", row.integrated_answer);
    }
    println!(
        "final answer: {:?} ({} tokens)",
        response.transcript.final_answer, response.transcript.total_token_cost
    );
    Ok(())
}

async fn cmd_report(
    client: &Client,
    dir: &Path,
    bins: usize,
    ua_threshold: f64,
) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| usage(format!("cannot read transcript dir {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.ends_with(".jsonl") && n != "report.json")
                .unwrap_or(false)
        })
        .collect();
    paths.sort();

    let mut transcripts: Vec<DebateTranscript> = Vec::new();
    for path in &paths {
        let raw = match std::fs::read_to_string(path) {
            Ok(raw) => raw,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        match parse_lines(&raw) {
            Ok(transcript) => transcripts.push(transcript),
            Err(e) => eprintln!("warning: skipping {}: {e}", path.display()),
        }
    }
    if transcripts.is_empty() {
        return Err(usage(format!(
            "no readable transcripts in {}",
            dir.display()
        )));
    }

    let analytics = client
        .report(&ReportRequest {
            transcripts,
            bins,
            ua_threshold,
        })
        .await
        .map_err(runtime)?;

    print_analytics(&analytics);
    let json = serde_json::to_string_pretty(&analytics).map_err(|e| runtime(e.to_string()))?;
    write_atomic(&dir.join("report.json"), &json)?;
    Ok(())
}

fn print_analytics(analytics: &BatchAnalytics) {
    match &analytics.decay {
        Some(fit) => println!(
            "decay fit: u0={:.4} lambda={:.4} per-round rate={:.2}% residual={:.2e}",
            fit.u0,
            fit.lambda_decay,
            fit.per_round_decay_rate * 100.0,
            fit.residual
        ),
        None => println!("decay fit: skipped"),
    }
    println!("cost:");
    println!(
        "  mean debate rounds: {:.2}",
        analytics.cost.mean_debate_rounds
    );
    println!("  trigger rate: {:.2}", analytics.cost.trigger_rate);
    let cumulative: Vec<String> = analytics
        .cost
        .per_round_mean_cumulative_cost
        .iter()
        .map(|c| format!("{c:.1}"))
        .collect();
    println!(
        "  mean cumulative tokens by round: {}",
        cumulative.join(", ")
    );
    let reasons: Vec<String> = analytics
        .cost
        .termination_histogram
        .iter()
        .map(|(reason, count)| format!("{reason}={count}"))
        .collect();
    println!("  termination reasons: {}", reasons.join(" "));
    match &analytics.calibration {
        Some(c) => {
            let da =
                c.da.map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "n/a".to_string());
            println!(
                "calibration (n={}, bins={}): ece={:.4} ua={:.4} da={}",
                c.n_samples, c.bin_count, c.ece, c.ua, da
            );
        }
        None => println!("calibration: skipped (no ground truth)"),
    }
    for note in &analytics.notes {
        println!("note: {note}");
    }
}

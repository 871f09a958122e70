//! `connkit` command-line interface.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use connkit::extraction::{
    load_dataset, load_predictions, random_baseline_predictions, score_dataset, score_steps, to_pretty_json, with_blank_manuals,
    ExtractionDataset, PredictionsFile, StepPrediction, DATASET_FORMAT_VERSION,
};
use connkit::graph::{
    evaluate_poses, load_graph, load_poses, plan_sequence, solve_graph_poses, validate, AssemblyGraph, EdgeId, PosesFile,
};
use connkit::sim::{load_scenario, EdgePoses};
use connkit::strategy::{read_reports, run_benchmark, summarize, summary_csv, summary_table, write_reports, BenchmarkOptions, StrategyConfig, StrategyKind};
use connkit::vlm::{resume_pipeline, HttpClient, MockClient, ModelClient, PipelineOptions, RecordingClient, ReplayClient};
use serde::Serialize;

use config::{echo_path, ClientKind, RunConfig};

#[derive(Parser)]
#[command(name = "connkit", version, about = "Connection-aware assembly toolkit")]
struct Cli {
    /// Run configuration file; defaults to $CONNKIT_CONFIG.
    #[arg(long, global = true, env = "CONNKIT_CONFIG")]
    config: Option<PathBuf>,
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assembly graph checks and planning.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Pose alignment.
    #[command(subcommand)]
    Pose(PoseCommand),
    /// Connection extraction.
    #[command(subcommand)]
    Extract(ExtractCommand),
    /// Insertion simulation.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Prints the validation report; exits 1 when the graph is invalid.
    Validate(GraphArgs),
    /// Lists connection operations in execution order as JSON lines.
    Plan(GraphArgs),
}

#[derive(Subcommand)]
enum PoseCommand {
    /// Solves every connection edge, or a single one with --edge.
    Solve(PoseSolveArgs),
    /// Scores solved poses against the graph's assembled poses.
    Eval(PoseEvalArgs),
}

#[derive(Subcommand)]
enum ExtractCommand {
    /// Scores predictions against a dataset.
    Eval(ExtractEvalArgs),
    /// Writes uniformly random predictions.
    RandomBaseline(BaselineArgs),
    /// Runs the two-stage prompting pipeline.
    RunPipeline(PipelineArgs),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Runs insertion trials and writes one report per line.
    Run(SimRunArgs),
    /// Summarizes trial reports by task and strategy.
    Report(SimReportArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct PoseSolveArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    edge: Option<String>,
    /// Weight of the normal term.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct PoseEvalArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Chamfer threshold for part accuracy, meters.
    #[arg(long)]
    pa_threshold: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ExtractEvalArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Count pairs as correct regardless of connector type.
    #[arg(long)]
    ignore_type: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    client: Option<ClientKind>,
    /// Recorded responses for the replay client.
    #[arg(long)]
    responses: Option<PathBuf>,
    /// Records every response to this file for later replay.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Blanks this many manual pages, chosen with --seed.
    #[arg(long)]
    blank_manuals: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Accept only bare, canonical model answers.
    #[arg(long)]
    strict: bool,
    /// Keeps predictions already in --out and runs only the missing steps.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct SimRunArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Solved poses from `pose solve`; solved in-process when absent.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Hole geometry overrides.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// random, grid, hybrid or all.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Step budget per trial.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct SimReportArgs {
    /// Trial reports from `sim run`.
    results: Option<PathBuf>,
    /// Also write the summary as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().with_context(|| format!("missing --{flag} (or paths.{flag} in the config)"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_graph(path: &Path) -> Result<AssemblyGraph> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_graph(&bytes).with_context(|| format!("loading graph {}", path.display()))
}

fn read_poses(path: &Path, graph: &AssemblyGraph) -> Result<PosesFile> {
    let poses = load_poses(&read(path)?).with_context(|| format!("loading poses {}", path.display()))?;
    if poses.task != graph.name {
        bail!("poses {} are for task `{}`, the graph is `{}`", path.display(), poses.task, graph.name);
    }
    Ok(poses)
}

fn read_dataset(path: &Path) -> Result<ExtractionDataset> {
    load_dataset(&read(path)?).with_context(|| format!("loading dataset {}", path.display()))
}

/// Writes `text` to the configured output, or standard output, and echoes
/// the effective config next to a file output.
fn emit(config: &RunConfig, text: &str) -> Result<()> {
    match &config.paths.out {
        Some(out) => {
            fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
            fs::write(echo_path(out), config.to_pretty_json())
                .with_context(|| format!("writing {}", echo_path(out).display()))?;
            log::info!("wrote {}", out.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            log::debug!("effective config:\n{}", config.to_pretty_json());
        }
    }
    Ok(())
}

fn pretty<T: Serialize>(value: &T) -> String {
    to_pretty_json(value)
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

fn configure_threads(parallelism: usize) {
    if parallelism > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(parallelism).build_global() {
            log::warn!("cannot size the worker pool: {e}");
        }
    }
}

/// Outcome of a command that ran to completion but found problems.
struct Failed;

fn run(cli: Cli) -> Result<Result<(), Failed>> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let paths = &mut config.paths;
    let name = match &cli.command {
        Command::Graph(GraphCommand::Validate(_)) => "graph validate",
        Command::Graph(GraphCommand::Plan(_)) => "graph plan",
        Command::Pose(PoseCommand::Solve(_)) => "pose solve",
        Command::Pose(PoseCommand::Eval(_)) => "pose eval",
        Command::Extract(ExtractCommand::Eval(_)) => "extract eval",
        Command::Extract(ExtractCommand::RandomBaseline(_)) => "extract random-baseline",
        Command::Extract(ExtractCommand::RunPipeline(_)) => "extract run-pipeline",
        Command::Sim(SimCommand::Run(_)) => "sim run",
        Command::Sim(SimCommand::Report(_)) => "sim report",
    };
    config.command = Some(name.to_owned());

    match cli.command {
        Command::Graph(cmd) => {
            let (args, plan) = match cmd {
                GraphCommand::Validate(a) => (a, false),
                GraphCommand::Plan(a) => (a, true),
            };
            set_path(&mut paths.graph, args.graph);
            set_path(&mut paths.out, args.out.out);
            let graph = read_graph(required(&config.paths.graph, "graph")?)?;
            let report = validate(&graph);
            if !plan {
                emit(&config, &pretty(&report))?;
                return Ok(if report.is_valid() { Ok(()) } else { Err(Failed) });
            }
            let ops = plan_sequence(&graph)?;
            log::info!("{}: {} operations", graph.name, ops.len());
            emit(&config, &jsonl(&ops))?;
        }
        Command::Pose(PoseCommand::Solve(args)) => {
            set_path(&mut paths.graph, args.graph);
            set_path(&mut paths.out, args.out.out);
            set(&mut config.alpha, args.alpha);
            let graph = read_graph(required(&config.paths.graph, "graph")?)?;
            let solved = solve_graph_poses(&graph, config.alpha)?;
            let text = match args.edge {
                Some(edge) => {
                    let id = EdgeId::new(&edge);
                    let solution = solved.edges.get(&id).with_context(|| format!("no connection edge `{edge}`"))?;
                    #[derive(Serialize)]
                    struct One<'a> {
                        edge: &'a EdgeId,
                        #[serde(flatten)]
                        solution: &'a connkit::graph::EdgeSolution,
                    }
                    pretty(&One { edge: &id, solution })
                }
                None => pretty(&PosesFile::new(&graph.name, config.alpha, &solved)),
            };
            emit(&config, &text)?;
        }
        Command::Pose(PoseCommand::Eval(args)) => {
            set_path(&mut paths.graph, args.graph);
            set_path(&mut paths.poses, args.poses);
            set_path(&mut paths.out, args.out.out);
            set(&mut config.pa_threshold, args.pa_threshold);
            let graph = read_graph(required(&config.paths.graph, "graph")?)?;
            let poses = read_poses(required(&config.paths.poses, "poses")?, &graph)?;
            let metrics = evaluate_poses(&graph, &poses.edge_transforms(), config.pa_threshold)?;
            emit(&config, &pretty(&metrics))?;
        }
        Command::Extract(ExtractCommand::Eval(args)) => {
            set_path(&mut paths.dataset, args.dataset);
            set_path(&mut paths.predictions, args.predictions);
            set_path(&mut paths.out, args.out.out);
            if args.ignore_type {
                config.extract.score.match_connector_type = false;
            }
            let dataset = read_dataset(required(&config.paths.dataset, "dataset")?)?;
            let preds = load_predictions(&read(required(&config.paths.predictions, "predictions")?)?)?;
            if preds.task != dataset.task {
                log::warn!("predictions are for task `{}`, dataset is `{}`", preds.task, dataset.task);
            }
            #[derive(Serialize)]
            struct Scores {
                task: String,
                overall: connkit::extraction::ExtractionScore,
                steps: Vec<connkit::extraction::ExtractionScore>,
            }
            let opts = config.extract.score;
            let scores = Scores {
                task: dataset.task.clone(),
                overall: score_dataset(&preds.predictions, &dataset, opts),
                steps: score_steps(&preds.predictions, &dataset, opts),
            };
            emit(&config, &pretty(&scores))?;
        }
        Command::Extract(ExtractCommand::RandomBaseline(args)) => {
            set_path(&mut paths.dataset, args.dataset);
            set_path(&mut paths.out, args.out.out);
            set(&mut config.seed, args.seed);
            let dataset = read_dataset(required(&config.paths.dataset, "dataset")?)?;
            let predictions = random_baseline_predictions(&dataset, config.seed)?;
            let file = PredictionsFile {
                format_version: DATASET_FORMAT_VERSION,
                task: dataset.task.clone(),
                predictions,
            };
            emit(&config, &pretty(&file))?;
        }
        Command::Extract(ExtractCommand::RunPipeline(args)) => {
            set_path(&mut paths.dataset, args.dataset);
            set_path(&mut paths.responses, args.responses);
            set_path(&mut paths.record, args.record);
            set_path(&mut paths.out, args.out.out);
            set(&mut config.extract.client, args.client);
            set(&mut config.extract.blank_manuals, args.blank_manuals);
            set(&mut config.seed, args.seed);
            set(&mut config.parallelism, args.parallelism);
            if args.strict {
                config.extract.parse_mode = connkit::vlm::ParseMode::Strict;
            }
            return run_pipeline(&config, args.resume);
        }
        Command::Sim(SimCommand::Run(args)) => {
            set_path(&mut paths.graph, args.graph);
            set_path(&mut paths.poses, args.poses);
            set_path(&mut paths.scenario, args.scenario);
            set_path(&mut paths.out, args.out.out);
            set(&mut config.seed, args.seed);
            set(&mut config.sim.trials, args.trials);
            set(&mut config.sim.strategy.budget, args.budget);
            set(&mut config.parallelism, args.parallelism);
            if let Some(s) = args.strategy {
                config.sim.strategies = if s == "all" { StrategyKind::ALL.to_vec() } else { vec![s.parse()?] };
            }
            if let Some(path) = &config.paths.scenario {
                config.sim.scenario = load_scenario(&read(path)?)?;
            }
            sim_run(&config)?;
        }
        Command::Sim(SimCommand::Report(args)) => {
            set_path(&mut paths.results, args.results);
            set_path(&mut paths.out, args.out.out);
            let reports = read_reports(&read(required(&config.paths.results, "results")?)?)?;
            let rows = summarize(&reports);
            if let Some(csv) = &args.csv {
                fs::write(csv, summary_csv(&rows)).with_context(|| format!("writing {}", csv.display()))?;
            }
            emit(&config, &summary_table(&rows))?;
        }
    }
    Ok(Ok(()))
}

fn run_pipeline(config: &RunConfig, resume: bool) -> Result<Result<(), Failed>> {
    let dataset = read_dataset(required(&config.paths.dataset, "dataset")?)?;
    let dataset = with_blank_manuals(&dataset, config.extract.blank_manuals, config.seed);
    let inner: Box<dyn ModelClient> = match config.extract.client {
        ClientKind::Oracle => Box::new(MockClient::oracle(&dataset)),
        ClientKind::Replay => {
            let path = required(&config.paths.responses, "responses")?;
            Box::new(ReplayClient::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))?)
        }
        ClientKind::Http => Box::new(HttpClient::from_env(config.extract.http.clone())?),
    };
    let client = RecordingClient::new(&*inner);
    let done: Vec<StepPrediction> = match (&config.paths.out, resume) {
        (Some(out), true) if out.exists() => load_predictions(&read(out)?)?.predictions,
        (None, true) => bail!("--resume needs --out"),
        _ => Vec::new(),
    };
    let opts = PipelineOptions {
        parallelism: if config.parallelism == 0 { rayon::current_num_threads() } else { config.parallelism },
        mode: config.extract.parse_mode,
        ..PipelineOptions::default()
    };
    let run = resume_pipeline(&dataset, &client, &opts, &done, &|p| log::info!("step {} done", p.step_index));
    if let Some(path) = &config.paths.record {
        let replay = client.into_replay();
        fs::write(path, pretty(&replay.responses)).with_context(|| format!("writing {}", path.display()))?;
    }
    for d in &run.diagnostics {
        log::warn!("step {} stage {}: {}", d.step_index, d.stage, d.message);
    }
    emit(config, &pretty(&run.predictions))?;
    Ok(if run.diagnostics.is_empty() { Ok(()) } else { Err(Failed) })
}

fn sim_run(config: &RunConfig) -> Result<()> {
    configure_threads(config.parallelism);
    let graph = read_graph(required(&config.paths.graph, "graph")?)?;
    let poses: EdgePoses = match &config.paths.poses {
        Some(path) => read_poses(path, &graph)?.edge_transforms(),
        None => solve_graph_poses(&graph, config.alpha)?.edge_transforms(),
    };
    let strategies: Vec<StrategyConfig> = config
        .sim
        .strategies
        .iter()
        .map(|&kind| StrategyConfig { kind, ..config.sim.strategy })
        .collect();
    let options = BenchmarkOptions {
        init: config.sim.init,
        scenario: config.sim.scenario.clone(),
    };
    let reports = run_benchmark(&graph, &poses, &strategies, config.sim.trials, config.seed, &options)?;
    for row in summarize(&reports) {
        log::info!("{} {}: {}/{} succeeded", row.task, row.strategy, row.successes, row.trials);
    }
    emit(config, &write_reports(&reports))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vog_core::agent::PromptTemplates;
use vog_core::eval::{evaluate, load_ground_truth, load_traces};
use vog_core::graph::{build_graph, load_graph, save_graph};
use vog_core::scene::{load_bundle_with, LoadOptions, DEFAULT_POINT_CAP};
use vog_core::traversal::trace_report;
use vog_core::{
    run_grounding, BuildParams, DecisionAgent, DirImageSource, GroundingTrace, OracleAgent, RemoteAgent, RemoteConfig,
    RunConfig, ScriptedAgent, TerminationReason,
};

mod simulate;

#[derive(Parser)]
#[command(name = "vog", version, about = "View-guided 3D visual grounding over multi-layer scene graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the scene graph for a scene bundle directory.
    BuildGraph(BuildGraphArgs),
    /// Ground one referring expression on a built graph.
    Ground(GroundArgs),
    /// Generate synthetic scenes, ground every query and score the result.
    Simulate(simulate::SimulateArgs),
    /// Score a directory of traces against a ground-truth file.
    Eval(EvalArgs),
    /// Print a trace round by round.
    TraceReport(TraceReportArgs),
}

#[derive(Args, Clone)]
pub(crate) struct GraphParams {
    /// Object-object relation radius in meters.
    #[arg(long = "r", default_value_t = 0.5)]
    radius: f64,
    /// View pairs with overlap below this are complementary.
    #[arg(long, default_value_t = 0.2)]
    tau_low: f64,
    /// View pairs with overlap at or above this get no edge.
    #[arg(long, default_value_t = 0.8)]
    tau_high: f64,
    /// Number of representative views kept.
    #[arg(long = "views", default_value_t = 16)]
    view_count: usize,
    /// Seed for view clustering.
    #[arg(long = "seed", default_value_t = 0)]
    graph_seed: u64,
}

impl GraphParams {
    pub(crate) fn build_params(&self) -> BuildParams {
        BuildParams {
            radius_r: self.radius,
            tau_low: self.tau_low,
            tau_high: self.tau_high,
            view_count_m: self.view_count,
            kmeans_seed: self.graph_seed,
            ..BuildParams::default()
        }
    }
}

#[derive(Args)]
struct BuildGraphArgs {
    /// Scene bundle directory containing scene.json.
    bundle: PathBuf,
    #[command(flatten)]
    params: GraphParams,
    /// Output path [default: <bundle>/graph.json].
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Points kept per object after subsampling.
    #[arg(long, default_value_t = DEFAULT_POINT_CAP)]
    point_cap: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentKind {
    Scripted,
    Oracle,
    Remote,
}

#[derive(Args, Clone)]
pub(crate) struct TraversalArgs {
    /// Exploration rounds before the forced global choice.
    #[arg(long, default_value_t = 4)]
    dmax: u32,
    /// Grid side length in cells.
    #[arg(long, default_value_t = 3)]
    grid: usize,
    /// Re-prompts allowed after an unusable reply.
    #[arg(long, default_value_t = 2)]
    retry_budget: u32,
    /// Directory with system.txt, user.txt, query_system.txt, query_user.txt.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Store per-round wall-clock time in traces.
    #[arg(long)]
    timing: bool,
}

impl TraversalArgs {
    pub(crate) fn run_config(&self, seed: u64) -> Result<RunConfig> {
        let templates = match &self.templates {
            Some(dir) => PromptTemplates::from_dir(dir).with_context(|| format!("reading templates from {}", dir.display()))?,
            None => PromptTemplates::default(),
        };
        Ok(RunConfig {
            d_max: self.dmax,
            grid_size: self.grid,
            seed,
            retry_budget: self.retry_budget,
            templates,
            record_timing: self.timing,
            ..RunConfig::default()
        })
    }
}

#[derive(Args, Clone)]
pub(crate) struct RemoteArgs {
    /// OpenAI-compatible base URL.
    #[arg(long, env = "VOG_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "VOG_MODEL")]
    model: Option<String>,
    #[arg(long, env = "VOG_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Requests in flight at once.
    #[arg(long, default_value_t = 4)]
    max_connections: usize,
}

impl RemoteArgs {
    pub(crate) fn agent(&self, retry_budget: u32) -> Result<RemoteAgent> {
        let (Some(endpoint), Some(model)) = (&self.endpoint, &self.model) else {
            bail!("the remote agent needs --endpoint and --model (or VOG_ENDPOINT and VOG_MODEL)");
        };
        let mut cfg = RemoteConfig::new(endpoint.clone(), model.clone());
        cfg.api_key = self.api_key.clone().filter(|k| !k.is_empty());
        cfg.timeout = Duration::from_secs(self.timeout);
        cfg.max_connections = self.max_connections.max(1);
        cfg.retry_budget = retry_budget;
        Ok(RemoteAgent::new(cfg)?)
    }
}

#[derive(Args)]
struct GroundArgs {
    /// Graph file written by build-graph.
    graph: PathBuf,
    #[arg(long, short)]
    query: String,
    #[arg(long, value_enum)]
    agent: AgentKind,
    /// Comma-separated action numbers for the scripted agent.
    #[arg(long, value_delimiter = ',')]
    script: Vec<u32>,
    /// Ground-truth object id for the oracle agent.
    #[arg(long)]
    gt: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    traversal: TraversalArgs,
    #[command(flatten)]
    remote: RemoteArgs,
    /// Image root [default: the bundle directory recorded in the graph].
    #[arg(long)]
    images: Option<PathBuf>,
    /// Write the trace here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Save each round's grid image into this directory.
    #[arg(long)]
    grid_dir: Option<PathBuf>,
    #[arg(long)]
    query_id: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory searched recursively for trace files.
    #[arg(long)]
    traces: PathBuf,
    /// JSON map from query id to {object_id, bbox}.
    #[arg(long)]
    gt: PathBuf,
    /// Also write the machine-readable summary here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TraceReportArgs {
    trace: PathBuf,
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn build_graph_cmd(args: BuildGraphArgs) -> Result<()> {
    let options = LoadOptions {
        point_cap: args.point_cap,
        ..LoadOptions::default()
    };
    let bundle = load_bundle_with(&args.bundle, &options)?;
    let graph = build_graph(&bundle, &args.params.build_params())?;
    let out = args.out.unwrap_or_else(|| args.bundle.join("graph.json"));
    save_graph(&graph, &out)?;
    eprintln!(
        "{}: {} views, {} objects, {} object edges, {} visibility edges, {} view edges -> {}",
        graph.scene_id,
        graph.views.len(),
        graph.objects.len(),
        graph.edges_oo.len(),
        graph.edges_vo.len(),
        graph.edges_vv.len(),
        out.display()
    );
    Ok(())
}

fn ground_cmd(args: GroundArgs) -> Result<()> {
    let graph = load_graph(&args.graph)?;
    let root = match (&args.images, &graph.bundle_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => bail!("graph records no bundle directory; pass --images"),
    };
    let images = DirImageSource::new(root);
    let mut agent: Box<dyn DecisionAgent> = match args.agent {
        AgentKind::Scripted => {
            if args.script.is_empty() {
                bail!("the scripted agent needs --script, e.g. --script 1,3");
            }
            Box::new(ScriptedAgent::new(args.script.clone()))
        }
        AgentKind::Oracle => {
            let gt = args.gt.as_deref().context("the oracle agent needs --gt <object id>")?;
            Box::new(OracleAgent::new(gt, &graph).with_context(|| format!("object {gt} is not in the graph"))?)
        }
        AgentKind::Remote => Box::new(args.remote.agent(args.traversal.retry_budget)?),
    };
    let mut config = args.traversal.run_config(args.seed)?;
    config.grid_dir = args.grid_dir.clone();
    config.query_id = args.query_id.clone();
    let trace = run_grounding(&graph, &args.query, agent.as_mut(), &images, &config)?;
    report_outcome(&trace);
    match &args.out {
        Some(path) => write_text(path, &trace.to_json())?,
        None => print!("{}", trace.to_json()),
    }
    Ok(())
}

fn report_outcome(trace: &GroundingTrace) {
    let picked = trace.final_object_id.as_deref().unwrap_or("nothing");
    eprintln!(
        "{} {} after {} agent calls",
        trace.termination_reason.as_str(),
        picked,
        trace.agent_call_count
    );
    if trace.termination_reason == TerminationReason::AgentFailure {
        if let Some(f) = &trace.failure {
            log::warn!("agent failure: {f}");
        }
    }
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let traces = load_traces(&args.traces)?;
    if traces.is_empty() {
        bail!("no traces found under {}", args.traces.display());
    }
    let gt = load_ground_truth(&args.gt)?;
    let summary = evaluate(&traces, &gt)?;
    print!("{}", summary.table());
    if let Some(path) = &args.json {
        write_text(path, &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    }
    Ok(())
}

fn trace_report_cmd(args: TraceReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.trace).with_context(|| format!("reading {}", args.trace.display()))?;
    let trace = GroundingTrace::from_json(&text).with_context(|| format!("parsing {}", args.trace.display()))?;
    print!("{}", trace_report(&trace));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::BuildGraph(a) => build_graph_cmd(a),
        Command::Ground(a) => ground_cmd(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Eval(a) => eval_cmd(a),
        Command::TraceReport(a) => trace_report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;

use vog_core::eval::{evaluate, GroundTruth};
use vog_core::graph::{build_graph, save_graph};
use vog_core::synth::{generate_scene, SyntheticSpec};
use vog_core::{run_grounding, DecisionAgent, GroundingTrace, OracleAgent};

use crate::{write_text, GraphParams, RemoteArgs, TraversalArgs};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum SimAgent {
    Oracle,
    Remote,
}

#[derive(Args)]
pub(crate) struct SimulateArgs {
    /// Synthetic scene spec (JSON); missing fields take their defaults.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "oracle")]
    agent: SimAgent,
    /// Output directory for scenes/, traces/, gt.json and summary.json.
    #[arg(long, short, default_value = "sim_out")]
    out: PathBuf,
    /// Override the spec's scene count.
    #[arg(long)]
    scenes: Option<usize>,
    /// Worker threads [default: one per core].
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    params: GraphParams,
    #[command(flatten)]
    traversal: TraversalArgs,
    #[command(flatten)]
    remote: RemoteArgs,
}

struct SceneResult {
    traces: Vec<GroundingTrace>,
    gt: GroundTruth,
}

fn run_scene(args: &SimulateArgs, spec: &SyntheticSpec, remote: Option<&vog_core::RemoteAgent>) -> Result<SceneResult> {
    let mut scene = generate_scene(spec).with_context(|| format!("scene seed {}", spec.seed))?;
    let id = scene.bundle.scene_id.clone();
    let dir = args.out.join("scenes").join(&id);
    scene.write_to(&dir)?;
    scene.bundle.root = Some(dir.clone());
    let graph = build_graph(&scene.bundle, &args.params.build_params())?;
    save_graph(&graph, dir.join("graph.json"))?;
    let images = scene.image_source();

    let mut traces = Vec::with_capacity(scene.queries.len());
    for q in &scene.queries {
        let mut agent: Box<dyn DecisionAgent> = match remote {
            Some(r) => Box::new(r.clone()),
            None => Box::new(OracleAgent::new(&q.target_id, &graph).context("target missing from graph")?),
        };
        let mut config = args.traversal.run_config(spec.seed)?;
        config.query_id = Some(q.query_id.clone());
        let trace = run_grounding(&graph, &q.text, agent.as_mut(), &images, &config)
            .with_context(|| format!("query {}", q.query_id))?;
        let path = args.out.join("traces").join(&id).join(format!("{}.json", q.query_id));
        write_text(&path, &trace.to_json())?;
        traces.push(trace);
    }
    Ok(SceneResult {
        traces,
        gt: scene.ground_truth(),
    })
}

pub(crate) fn run(args: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading {}", args.spec.display()))?;
    let base: SyntheticSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let count = args.scenes.unwrap_or(base.scene_count);
    let remote = match args.agent {
        SimAgent::Remote => Some(args.remote.agent(args.traversal.retry_budget)?),
        SimAgent::Oracle => None,
    };
    let specs: Vec<SyntheticSpec> = (0..count as u64)
        .map(|k| SyntheticSpec {
            seed: base.seed + k,
            ..base.clone()
        })
        .collect();

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.jobs {
        pool = pool.num_threads(n.max(1));
    }
    let results: Vec<SceneResult> = pool
        .build()?
        .install(|| specs.par_iter().map(|s| run_scene(&args, s, remote.as_ref())).collect::<Result<_>>())?;

    let mut traces = Vec::new();
    let mut gt = GroundTruth::new();
    for r in results {
        traces.extend(r.traces);
        gt.extend(r.gt);
    }
    write_text(&args.out.join("gt.json"), &format!("{}\n", serde_json::to_string_pretty(&gt)?))?;
    let summary = evaluate(&traces, &gt)?;
    write_text(&args.out.join("summary.json"), &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    print!("{}", summary.table());
    eprintln!("{count} scenes, {} queries -> {}", traces.len(), args.out.display());
    Ok(())
}

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::menu::{expand_candidates, filtered_visible_objects, forced_global_menu, CandidateMenu};
use super::query::{lexicon_parse, query_from_reply, ParsedQuery};
use super::state::{apply_action, ActionOutcome, TraversalState};
use super::trace::{Attempt, GroundingTrace, RoundRecord, TerminationReason};
use super::TraversalError;
use crate::agent::prompt::{render_prompt, render_query_prompt, PromptTemplates};
use crate::agent::{parse_action, AgentRequest, DecisionAgent, QueryRequest};
use crate::graph::Mmmg;
use crate::grid::{compose_grid, history_eviction, ImageSource, DEFAULT_CELL_SIZE, DEFAULT_GRID_SIZE};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub d_max: u32,
    pub grid_size: usize,
    pub cell_size: (u32, u32),
    pub seed: u64,
    /// Re-prompts allowed after a malformed or out-of-range reply.
    pub retry_budget: u32,
    /// Upper bound on objects offered in the forced-global round.
    pub pool_cap: Option<usize>,
    pub agent_timeout: Duration,
    pub templates: PromptTemplates,
    /// Wall-clock time per round is stored only when set, so traces stay
    /// byte-identical across runs by default.
    pub record_timing: bool,
    /// Where to write each round's grid PNG, if anywhere.
    pub grid_dir: Option<PathBuf>,
    pub query_id: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d_max: 4,
            grid_size: DEFAULT_GRID_SIZE,
            cell_size: DEFAULT_CELL_SIZE,
            seed: 0,
            retry_budget: 2,
            pool_cap: None,
            agent_timeout: Duration::from_secs(60),
            templates: PromptTemplates::default(),
            record_timing: false,
            grid_dir: None,
            query_id: None,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), TraversalError> {
        if self.d_max == 0 {
            return Err(TraversalError::InvalidConfig("d_max must be at least 1".into()));
        }
        if self.grid_size < 2 {
            return Err(TraversalError::InvalidConfig("grid size must be at least 2".into()));
        }
        if self.cell_size.0 == 0 || self.cell_size.1 < 2 {
            return Err(TraversalError::InvalidConfig("cell size too small".into()));
        }
        Ok(())
    }
}

/// Seeded uniform pick among views that see the target class, or among all
/// views when none does.
pub fn select_start_view(graph: &Mmmg, query: &ParsedQuery, seed: u64) -> Option<String> {
    let seeing: Vec<&str> = graph
        .views
        .iter()
        .map(|v| v.view_id.as_str())
        .filter(|v| !filtered_visible_objects(graph, v, query).is_empty())
        .collect();
    let pool: Vec<&str> = if seeing.is_empty() {
        graph.views.iter().map(|v| v.view_id.as_str()).collect()
    } else {
        seeing
    };
    if pool.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(pool[rng.random_range(0..pool.len())].to_string())
}

struct Parsed {
    query: ParsedQuery,
    reply: String,
    source: &'static str,
}

fn parse_query(
    graph: &Mmmg,
    raw: &str,
    agent: &mut dyn DecisionAgent,
    config: &RunConfig,
) -> Result<Parsed, TraversalError> {
    let vocabulary = graph.class_vocabulary();
    let (system, user) = render_query_prompt(&config.templates, raw, &vocabulary);
    let reply = match agent.extract_query(&QueryRequest {
        system_prompt: &system,
        user_prompt: &user,
        raw_query: raw,
        vocabulary: &vocabulary,
        timeout: config.agent_timeout,
    }) {
        Ok(text) => text,
        Err(e) => {
            log::warn!("query extraction failed ({e}); using the lexicon");
            String::new()
        }
    };
    if let Some(query) = query_from_reply(raw, &reply, &vocabulary) {
        return Ok(Parsed {
            query,
            reply,
            source: "agent",
        });
    }
    let query = lexicon_parse(raw, &vocabulary).ok_or_else(|| TraversalError::NoTargetFound(raw.to_string()))?;
    Ok(Parsed {
        query,
        reply,
        source: "lexicon",
    })
}

enum Decision {
    Action(u32),
    Failed(String),
}

/// Asks for one action, re-prompting with a correction note while the reply
/// is unusable and retries remain.
#[allow(clippy::too_many_arguments)]
fn ask(
    agent: &mut dyn DecisionAgent,
    system: &str,
    user: &str,
    grid: &image::RgbImage,
    round_index: u32,
    menu: &CandidateMenu,
    config: &RunConfig,
    attempts: &mut Vec<Attempt>,
) -> Decision {
    let mut prompt = user.to_string();
    loop {
        let request = AgentRequest {
            system_prompt: system,
            user_prompt: &prompt,
            grid_image: grid,
            round_index,
            timeout: config.agent_timeout,
            menu,
        };
        let raw = match agent.decide(&request) {
            Ok(raw) => raw,
            Err(e) => {
                attempts.push(Attempt {
                    raw_reply: None,
                    error: Some(e.to_string()),
                });
                return Decision::Failed(e.to_string());
            }
        };
        match parse_action(&raw, menu) {
            Ok(i) => {
                attempts.push(Attempt {
                    raw_reply: Some(raw),
                    error: None,
                });
                return Decision::Action(i);
            }
            Err(e) => {
                attempts.push(Attempt {
                    raw_reply: Some(raw),
                    error: Some(e.to_string()),
                });
                if attempts.len() as u32 > config.retry_budget {
                    return Decision::Failed(format!("no usable reply after {} attempts: {e}", attempts.len()));
                }
                prompt = format!(
                    "{user}\nYour previous reply could not be used ({e}). Reply with exactly one {{\"NextAction\": <number>}} where <number> is between 1 and {}.\n",
                    menu.len()
                );
            }
        }
    }
}

/// Runs one grounding query to completion. Agent failures end the run with
/// an `AGENT_FAILURE` trace rather than an error.
pub fn run_grounding(
    graph: &Mmmg,
    query_text: &str,
    agent: &mut dyn DecisionAgent,
    images: &dyn ImageSource,
    config: &RunConfig,
) -> Result<GroundingTrace, TraversalError> {
    config.validate()?;
    if graph.views.is_empty() {
        return Err(TraversalError::EmptyGraph);
    }
    let parsed = parse_query(graph, query_text, agent, config)?;
    let query = parsed.query;
    let start = select_start_view(graph, &query, config.seed).ok_or(TraversalError::EmptyGraph)?;
    let mut state = TraversalState::start(graph, &start, &query);
    let max_switches = config.grid_size * config.grid_size - 1;
    let system_prompt = render_prompt(&config.templates, &CandidateMenu::default(), &query.raw_text, 1, config.d_max, false).0;

    let mut trace = GroundingTrace {
        scene_id: graph.scene_id.clone(),
        query_id: config.query_id.clone(),
        agent: agent.name().to_string(),
        seed: config.seed,
        d_max: config.d_max,
        query: query.clone(),
        query_reply: parsed.reply,
        query_source: parsed.source.to_string(),
        start_view: start,
        system_prompt: system_prompt.clone(),
        rounds: Vec::new(),
        path: Vec::new(),
        object_pool: Vec::new(),
        final_object_id: None,
        final_bbox: None,
        agent_call_count: 1,
        termination_reason: TerminationReason::ForcedGlobal,
        failure: None,
        class_counts: graph.class_counts(),
    };

    loop {
        let started = Instant::now();
        let round_index = trace.rounds.len() as u32 + 1;
        let (menu, forced) = if state.depth >= config.d_max {
            (forced_global_menu(graph, &state, &query, config.pool_cap), true)
        } else {
            match expand_candidates(graph, &state, &query, max_switches) {
                Ok(menu) => (menu, false),
                Err(TraversalError::ExhaustedFrontier) => {
                    (forced_global_menu(graph, &state, &query, config.pool_cap), true)
                }
                Err(e) => return Err(e),
            }
        };
        if menu.is_empty() {
            // Only reachable on a graph without objects.
            trace.termination_reason = TerminationReason::ForcedGlobal;
            break;
        }

        let candidate_ids = menu.switch_view_ids();
        let (kept, evicted) = history_eviction(&state.history, candidate_ids.len(), config.grid_size);
        let history: Vec<_> = kept.iter().filter_map(|id| graph.view(id)).collect();
        let candidates: Vec<_> = candidate_ids.iter().filter_map(|id| graph.view(id)).collect();
        let (grid, mut manifest) = compose_grid(&history, &candidates, images, config.grid_size, config.cell_size)?;
        manifest.evicted = evicted;
        if let Some(dir) = &config.grid_dir {
            let name = format!("{}_round{round_index}.png", config.query_id.as_deref().unwrap_or("grid"));
            let path = dir.join(name);
            std::fs::create_dir_all(dir)
                .map_err(|e| e.to_string())
                .and_then(|_| grid.save(&path).map_err(|e| e.to_string()))
                .map_err(|reason| TraversalError::Io {
                    path: path.display().to_string(),
                    reason,
                })?;
            manifest.image_path = Some(path.display().to_string());
        }

        let (_, user_prompt) = render_prompt(&config.templates, &menu, &query.raw_text, round_index, config.d_max, forced);
        let mut attempts = Vec::new();
        let decision = ask(agent, &system_prompt, &user_prompt, &grid, round_index, &menu, config, &mut attempts);
        trace.agent_call_count += 1;
        let mut record = RoundRecord {
            round_index,
            forced_global: forced,
            current_view: state.current_node.clone(),
            menu,
            grid: manifest,
            user_prompt,
            attempts,
            parsed_action: None,
            elapsed_ms: None,
        };
        let outcome = match decision {
            Decision::Action(i) => {
                record.parsed_action = Some(i);
                Some(apply_action(&mut state, i, &record.menu, graph, &query)?)
            }
            Decision::Failed(reason) => {
                trace.failure = Some(reason);
                None
            }
        };
        if config.record_timing {
            record.elapsed_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
        trace.rounds.push(record);
        match outcome {
            None => {
                trace.termination_reason = TerminationReason::AgentFailure;
                break;
            }
            Some(ActionOutcome::Selected(id)) => {
                trace.final_bbox = graph.object(&id).map(|o| o.bbox.to_array());
                trace.final_object_id = Some(id);
                trace.termination_reason = if forced {
                    TerminationReason::ForcedGlobal
                } else {
                    TerminationReason::Selected
                };
                break;
            }
            Some(ActionOutcome::Moved) => {}
        }
    }
    trace.path = state.path;
    trace.object_pool = state.object_pool;
    Ok(trace)
}

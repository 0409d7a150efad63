use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::menu::{ActionKind, CandidateMenu};
use super::query::ParsedQuery;
use super::state::{PathRelation, PathTriple, PoolEntry};
use crate::agent::prompt::action_line;
use crate::agent::ScriptedAgent;
use crate::grid::{CellContent, GridManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminationReason {
    Selected,
    ForcedGlobal,
    AgentFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Selected => "SELECTED",
            TerminationReason::ForcedGlobal => "FORCED_GLOBAL",
            TerminationReason::AgentFailure => "AGENT_FAILURE",
        }
    }
}

/// One exchange with the agent. Re-prompts after malformed replies add
/// further attempts to the same round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    pub forced_global: bool,
    pub current_view: String,
    pub menu: CandidateMenu,
    pub grid: GridManifest,
    pub user_prompt: String,
    pub attempts: Vec<Attempt>,
    pub parsed_action: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl RoundRecord {
    pub fn raw_reply(&self) -> Option<&str> {
        self.attempts.last().and_then(|a| a.raw_reply.as_deref())
    }

    pub fn chosen(&self) -> Option<&ActionKind> {
        self.parsed_action.and_then(|i| self.menu.get(i)).map(|a| &a.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingTrace {
    pub scene_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    pub agent: String,
    pub seed: u64,
    pub d_max: u32,
    pub query: ParsedQuery,
    /// Raw extraction reply; empty when the agent abstained.
    pub query_reply: String,
    pub query_source: String,
    pub start_view: String,
    pub system_prompt: String,
    pub rounds: Vec<RoundRecord>,
    pub path: Vec<PathTriple>,
    pub object_pool: Vec<PoolEntry>,
    pub final_object_id: Option<String>,
    pub final_bbox: Option<[f64; 6]>,
    pub agent_call_count: u32,
    pub termination_reason: TerminationReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Object count per class in the scene, for unique/multiple splits.
    pub class_counts: BTreeMap<String, usize>,
}

impl GroundingTrace {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trace serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// View ids entered through SWITCH_VIEW, in order.
    pub fn switched_views(&self) -> Vec<&str> {
        self.rounds
            .iter()
            .filter_map(|r| match r.chosen() {
                Some(ActionKind::SwitchView { view_id, .. }) => Some(view_id.as_str()),
                _ => None,
            })
            .collect()
    }
}

/// The accepted action of every round, in order.
pub fn action_script(trace: &GroundingTrace) -> Vec<u32> {
    trace.rounds.iter().filter_map(|r| r.parsed_action).collect()
}

/// Scripted agent that reproduces `trace` when run with the same seed.
pub fn replay_agent(trace: &GroundingTrace) -> ScriptedAgent {
    ScriptedAgent::new(action_script(trace)).with_query_reply(trace.query_reply.clone())
}

fn relation_label(r: &PathRelation) -> String {
    match r {
        PathRelation::ViewView(k) => format!("{k:?}").to_lowercase(),
        PathRelation::Sees => "sees".into(),
        PathRelation::Spatial(s) => s.to_string(),
    }
}

/// Round-by-round plain-text account of a run.
pub fn trace_report(trace: &GroundingTrace) -> String {
    let mut out = String::new();
    let q = &trace.query;
    let _ = writeln!(out, "scene {}  query {}", trace.scene_id, trace.query_id.as_deref().unwrap_or("-"));
    let _ = writeln!(out, "  \"{}\"", q.raw_text);
    let anchors = if q.anchor_classes.is_empty() {
        "none".to_string()
    } else {
        q.anchor_classes.join(", ")
    };
    let _ = writeln!(
        out,
        "  target {} | anchors {} | parsed by {}",
        q.target_class, anchors, trace.query_source
    );
    let _ = writeln!(out, "  agent {}  seed {}  D_max {}", trace.agent, trace.seed, trace.d_max);
    let _ = writeln!(out, "  start at {}", trace.start_view);
    for r in &trace.rounds {
        let tag = if r.forced_global { " (forced global)" } else { "" };
        let _ = writeln!(out, "\nround {}{} at {}", r.round_index, tag, r.current_view);
        let cells: Vec<String> = r
            .grid
            .cells
            .iter()
            .filter_map(|c| match &c.content {
                CellContent::History(v) => Some(format!("{v}*")),
                CellContent::Candidate(v) => Some(v.clone()),
                CellContent::Blank => None,
            })
            .collect();
        let _ = writeln!(out, "  grid {0}x{0}: {1}", r.grid.grid_size_s, cells.join(" "));
        for a in &r.menu.actions {
            let mark = if Some(a.index) == r.parsed_action { ">" } else { " " };
            let _ = writeln!(out, "  {mark} {}", action_line(a.index, &a.kind));
        }
        for fact in &r.menu.relation_facts {
            let _ = writeln!(out, "    {fact}");
        }
        for (i, a) in r.attempts.iter().enumerate() {
            if let Some(raw) = &a.raw_reply {
                let _ = writeln!(out, "  reply {}: {}", i + 1, raw.trim());
            }
            if let Some(err) = &a.error {
                let _ = writeln!(out, "  error {}: {err}", i + 1);
            }
        }
        if let Some(ms) = r.elapsed_ms {
            let _ = writeln!(out, "  {ms:.1} ms");
        }
    }
    let _ = writeln!(out);
    if !trace.path.is_empty() {
        let steps: Vec<String> = trace
            .path
            .iter()
            .map(|t| format!("{} -{}-> {}", t.subject_id, relation_label(&t.relation), t.object_id))
            .collect();
        let _ = writeln!(out, "path: {}", steps.join(", "));
    }
    let _ = writeln!(
        out,
        "result: {} {}{}",
        trace.termination_reason.as_str(),
        trace.final_object_id.as_deref().unwrap_or("NONE"),
        trace
            .final_bbox
            .map(|b| format!(" {}", crate::agent::prompt::format_bbox(&b)))
            .unwrap_or_default()
    );
    if let Some(f) = &trace.failure {
        let _ = writeln!(out, "failure: {f}");
    }
    let _ = writeln!(out, "agent calls: {}", trace.agent_call_count);
    out
}

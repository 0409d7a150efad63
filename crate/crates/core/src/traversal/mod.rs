//! The bounded view-guided traversal: query parsing, candidate menus,
//! traversal state, the round loop and its trace.

pub mod engine;
#[cfg(test)]
pub(crate) mod fixtures;
pub mod menu;
pub mod query;
pub mod state;
pub mod trace;

use thiserror::Error;

use crate::grid::GridError;

pub use engine::{run_grounding, select_start_view, RunConfig};
pub use menu::{expand_candidates, forced_global_menu, ActionKind, CandidateMenu, MenuAction};
pub use query::{lexicon_parse, ParsedQuery};
pub use state::{apply_action, ActionOutcome, PathRelation, PathTriple, PoolEntry, TraversalState};
pub use trace::{action_script, replay_agent, trace_report, GroundingTrace, RoundRecord, TerminationReason};

#[derive(Debug, Error)]
pub enum TraversalError {
    #[error("no known object class found in query {0:?}")]
    NoTargetFound(String),
    #[error("graph has no views")]
    EmptyGraph,
    #[error("no candidate actions left")]
    ExhaustedFrontier,
    #[error("action {index} is not on the {menu_len}-item menu")]
    UnknownAction { index: u32, menu_len: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::menu::{filtered_visible_objects, ActionKind, CandidateMenu};
use super::query::ParsedQuery;
use super::TraversalError;
use crate::geometry::SpatialRelation;
use crate::graph::{Mmmg, ViewEdgeKind};

/// Relation carried by one step of the reasoning path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", content = "kind", rename_all = "snake_case")]
pub enum PathRelation {
    ViewView(ViewEdgeKind),
    Sees,
    Spatial(SpatialRelation),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTriple {
    pub subject_id: String,
    pub relation: PathRelation,
    pub object_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub object_id: String,
    pub bbox: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalState {
    pub path: Vec<PathTriple>,
    pub current_node: String,
    pub visited: BTreeSet<String>,
    /// Visited views in visiting order.
    pub history: Vec<String>,
    /// Objects observed so far, first-seen order, no duplicates.
    pub object_pool: Vec<PoolEntry>,
    pub depth: u32,
}

impl TraversalState {
    /// State at the start view; its target-class objects seed the pool.
    pub fn start(graph: &Mmmg, start_view: &str, query: &ParsedQuery) -> Self {
        let mut state = TraversalState {
            path: Vec::new(),
            current_node: start_view.to_string(),
            visited: BTreeSet::from([start_view.to_string()]),
            history: vec![start_view.to_string()],
            object_pool: Vec::new(),
            depth: 0,
        };
        state.merge_pool(graph, filtered_visible_objects(graph, start_view, query));
        state
    }

    pub fn pool_ids(&self) -> impl Iterator<Item = &str> {
        self.object_pool.iter().map(|e| e.object_id.as_str())
    }

    fn merge_pool<'a>(&mut self, graph: &Mmmg, ids: impl IntoIterator<Item = &'a str>) {
        for id in ids {
            if self.object_pool.iter().any(|e| e.object_id == id) {
                continue;
            }
            if let Some(o) = graph.object(id) {
                self.object_pool.push(PoolEntry {
                    object_id: id.to_string(),
                    bbox: o.bbox.to_array(),
                });
            }
        }
    }

    /// Checks the chaining, visited-superset and unique-pool invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        for pair in self.path.windows(2) {
            if pair[0].object_id != pair[1].subject_id {
                return Err(format!("path breaks between {:?} and {:?}", pair[0], pair[1]));
            }
        }
        for t in &self.path {
            if !self.visited.contains(&t.subject_id) || !self.visited.contains(&t.object_id) {
                return Err(format!("path node outside visited set: {t:?}"));
            }
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = self.object_pool.iter().find(|e| !seen.insert(e.object_id.as_str())) {
            return Err(format!("duplicate pool entry {}", dup.object_id));
        }
        if self.depth as usize != self.path.len() {
            return Err(format!("depth {} but path has {} triples", self.depth, self.path.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionOutcome {
    Moved,
    Selected(String),
}

/// Applies the chosen menu entry. Switching views extends the path, marks the
/// view visited and pools its target-class objects; selecting ends the run.
pub fn apply_action(
    state: &mut TraversalState,
    index: u32,
    menu: &CandidateMenu,
    graph: &Mmmg,
    query: &ParsedQuery,
) -> Result<ActionOutcome, TraversalError> {
    let action = menu.get(index).ok_or(TraversalError::UnknownAction {
        index,
        menu_len: menu.len(),
    })?;
    match &action.kind {
        ActionKind::SelectObject { object_id, .. } => Ok(ActionOutcome::Selected(object_id.clone())),
        ActionKind::SwitchView { view_id, edge, .. } => {
            state.path.push(PathTriple {
                subject_id: state.current_node.clone(),
                relation: PathRelation::ViewView(*edge),
                object_id: view_id.clone(),
            });
            state.visited.insert(view_id.clone());
            state.history.push(view_id.clone());
            state.current_node = view_id.clone();
            state.merge_pool(graph, filtered_visible_objects(graph, view_id, query));
            state.depth += 1;
            Ok(ActionOutcome::Moved)
        }
    }
}

use serde::{Deserialize, Serialize};

use super::query::ParsedQuery;
use super::state::TraversalState;
use super::TraversalError;
use crate::graph::{Mmmg, ViewEdgeKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    SwitchView {
        view_id: String,
        frame_index: u32,
        edge: ViewEdgeKind,
    },
    SelectObject {
        object_id: String,
        bbox: [f64; 6],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuAction {
    /// The number the agent answers with; contiguous from 1.
    pub index: u32,
    #[serde(flatten)]
    pub kind: ActionKind,
}

/// Numbered actions offered to the agent in one round, plus the relation
/// facts injected into its prompt.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateMenu {
    pub actions: Vec<MenuAction>,
    #[serde(default)]
    pub relation_facts: Vec<String>,
}

impl CandidateMenu {
    pub fn from_kinds(kinds: impl IntoIterator<Item = ActionKind>, relation_facts: Vec<String>) -> Self {
        let actions = kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| MenuAction {
                index: i as u32 + 1,
                kind,
            })
            .collect();
        CandidateMenu {
            actions,
            relation_facts,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: u32) -> Option<&MenuAction> {
        index
            .checked_sub(1)
            .and_then(|i| self.actions.get(i as usize))
            .filter(|a| a.index == index)
    }

    pub fn switch_view_ids(&self) -> Vec<&str> {
        self.actions
            .iter()
            .filter_map(|a| match &a.kind {
                ActionKind::SwitchView { view_id, .. } => Some(view_id.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn object_ids(&self) -> Vec<&str> {
        self.actions
            .iter()
            .filter_map(|a| match &a.kind {
                ActionKind::SelectObject { object_id, .. } => Some(object_id.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn index_of_object(&self, object_id: &str) -> Option<u32> {
        self.actions.iter().find_map(|a| match &a.kind {
            ActionKind::SelectObject { object_id: id, .. } if id == object_id => Some(a.index),
            _ => None,
        })
    }
}

/// Target-class objects a view sees, in edge order.
pub fn filtered_visible_objects<'a>(graph: &'a Mmmg, view_id: &'a str, query: &'a ParsedQuery) -> Vec<&'a str> {
    graph
        .visible_objects(view_id)
        .filter(|o| o.class_label == query.target_class)
        .map(|o| o.object_id.as_str())
        .collect()
}

/// A view passes the semantic filter when it sees a target or anchor object.
pub fn view_is_relevant(graph: &Mmmg, view_id: &str, query: &ParsedQuery) -> bool {
    graph
        .visible_objects(view_id)
        .any(|o| query.is_relevant(&o.class_label))
}

/// `<subject>-<relation>-<object>` lines for object-object edges between
/// objects in `scope` whose subject is a target or anchor object.
pub fn relation_facts(graph: &Mmmg, scope: &[&str], query: &ParsedQuery) -> Vec<String> {
    graph
        .edges_oo
        .iter()
        .filter(|e| scope.contains(&e.subject_id.as_str()) && scope.contains(&e.object_id.as_str()))
        .filter(|e| {
            graph
                .object(&e.subject_id)
                .is_some_and(|o| query.is_relevant(&o.class_label))
        })
        .map(|e| format!("{}-{}-{}", e.subject_id, e.relation, e.object_id))
        .collect()
}

fn select_action(graph: &Mmmg, object_id: &str) -> Option<ActionKind> {
    graph.object(object_id).map(|o| ActionKind::SelectObject {
        object_id: o.object_id.clone(),
        bbox: o.bbox.to_array(),
    })
}

/// Candidate actions from the current view: unvisited relevant neighbor
/// views (complementary before adjacent, then by id, at most
/// `max_switches`), target-class objects the view sees, then the rest of the
/// accumulated pool.
pub fn expand_candidates(
    graph: &Mmmg,
    state: &TraversalState,
    query: &ParsedQuery,
    max_switches: usize,
) -> Result<CandidateMenu, TraversalError> {
    let current = state.current_node.as_str();
    let mut switches: Vec<(&str, ViewEdgeKind)> = graph
        .view_neighbors(current)
        .into_iter()
        .filter(|(n, _)| !state.visited.contains(*n))
        .filter(|(n, _)| view_is_relevant(graph, n, query))
        .collect();
    switches.sort_by(|a, b| {
        let rank = |k: ViewEdgeKind| matches!(k, ViewEdgeKind::Adjacent) as u8;
        rank(a.1).cmp(&rank(b.1)).then(a.0.cmp(b.0))
    });
    switches.truncate(max_switches);

    let mut kinds = Vec::new();
    for (view_id, edge) in switches {
        if let Some(v) = graph.view(view_id) {
            kinds.push(ActionKind::SwitchView {
                view_id: v.view_id.clone(),
                frame_index: v.frame_index,
                edge,
            });
        }
    }
    let mut listed: Vec<&str> = Vec::new();
    let visible = filtered_visible_objects(graph, current, query);
    for id in visible.iter().copied().chain(state.pool_ids()) {
        if state.visited.contains(id) || listed.contains(&id) {
            continue;
        }
        if let Some(kind) = select_action(graph, id) {
            listed.push(id);
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(TraversalError::ExhaustedFrontier);
    }
    let scope: Vec<&str> = graph.visible_objects(current).map(|o| o.object_id.as_str()).collect();
    Ok(CandidateMenu::from_kinds(kinds, relation_facts(graph, &scope, query)))
}

/// Menu for the final forced round: every pooled object, most recent kept
/// when `cap` truncates. An empty pool widens to all target-class objects,
/// then to every object, so the round always has something to choose.
pub fn forced_global_menu(graph: &Mmmg, state: &TraversalState, query: &ParsedQuery, cap: Option<usize>) -> CandidateMenu {
    let mut ids: Vec<&str> = state.pool_ids().collect();
    if ids.is_empty() {
        ids = graph
            .objects
            .iter()
            .filter(|o| o.class_label == query.target_class)
            .map(|o| o.object_id.as_str())
            .collect();
    }
    if ids.is_empty() {
        ids = graph.objects.iter().map(|o| o.object_id.as_str()).collect();
    }
    if let Some(cap) = cap {
        if ids.len() > cap {
            ids.drain(..ids.len() - cap);
        }
    }
    let facts = relation_facts(graph, &ids, query);
    CandidateMenu::from_kinds(ids.iter().filter_map(|id| select_action(graph, id)), facts)
}

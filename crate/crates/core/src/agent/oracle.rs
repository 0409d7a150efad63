use std::collections::HashMap;

use super::{action_json, AgentError, AgentRequest, DecisionAgent, QueryRequest};
use crate::graph::Mmmg;
use crate::traversal::query::lexicon_matches;
use crate::traversal::ActionKind;

/// Ground-truth policy used to exercise the traversal loop: select the
/// answer when offered, otherwise move toward the nearest view that sees it.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    ground_truth: String,
    class_label: String,
    /// View-view hop distance to the closest view seeing the ground truth.
    /// Only views that see the ground truth's class are traversed, since the
    /// menu's semantic filter always admits those.
    distance: HashMap<String, usize>,
}

impl OracleAgent {
    /// `None` when the ground truth is not an object of `graph`.
    pub fn new(ground_truth_object_id: &str, graph: &Mmmg) -> Option<Self> {
        let gt = graph.object(ground_truth_object_id)?;
        let class = gt.class_label.clone();
        let sources: Vec<&str> = graph
            .views
            .iter()
            .map(|v| v.view_id.as_str())
            .filter(|v| graph.sees(v, ground_truth_object_id))
            .collect();
        let distance = graph.view_hops(&sources, |v| graph.visible_objects(v).any(|o| o.class_label == class));
        Some(OracleAgent {
            ground_truth: ground_truth_object_id.to_string(),
            class_label: class,
            distance,
        })
    }

    pub fn distance_from(&self, view_id: &str) -> Option<usize> {
        self.distance.get(view_id).copied()
    }

    fn choose(&self, req: &AgentRequest<'_>) -> u32 {
        if let Some(i) = req.menu.index_of_object(&self.ground_truth) {
            return i;
        }
        let mut best: Option<(usize, u32)> = None;
        for a in &req.menu.actions {
            if let ActionKind::SwitchView { view_id, .. } = &a.kind {
                if let Some(d) = self.distance_from(view_id) {
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, a.index));
                    }
                }
            }
        }
        best.map(|(_, i)| i).unwrap_or(1)
    }
}

impl DecisionAgent for OracleAgent {
    fn name(&self) -> &str {
        "oracle"
    }

    /// Names the ground truth's class as target; every other vocabulary
    /// label mentioned in the query becomes an anchor.
    fn extract_query(&mut self, request: &QueryRequest<'_>) -> Result<String, AgentError> {
        let anchors: Vec<String> = lexicon_matches(request.raw_query, request.vocabulary)
            .into_iter()
            .filter(|l| *l != self.class_label)
            .collect();
        let reply = serde_json::json!({ "target": self.class_label, "anchors": anchors });
        Ok(reply.to_string())
    }

    fn decide(&mut self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        Ok(action_json(self.choose(request)))
    }
}

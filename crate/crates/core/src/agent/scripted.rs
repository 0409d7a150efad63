use std::collections::VecDeque;

use super::{action_json, AgentError, AgentRequest, DecisionAgent, QueryRequest};

/// Replays a fixed list of action indices, one per reasoning round.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    script: VecDeque<u32>,
    consumed: usize,
    query_reply: String,
}

impl ScriptedAgent {
    pub fn new(script: impl IntoIterator<Item = u32>) -> Self {
        ScriptedAgent {
            script: script.into_iter().collect(),
            consumed: 0,
            query_reply: String::new(),
        }
    }

    /// Canned reply for the extraction call (empty means abstain).
    pub fn with_query_reply(mut self, reply: impl Into<String>) -> Self {
        self.query_reply = reply.into();
        self
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl DecisionAgent for ScriptedAgent {
    fn name(&self) -> &str {
        "scripted"
    }

    fn extract_query(&mut self, _request: &QueryRequest<'_>) -> Result<String, AgentError> {
        Ok(self.query_reply.clone())
    }

    fn decide(&mut self, _request: &AgentRequest<'_>) -> Result<String, AgentError> {
        let next = self.script.pop_front().ok_or(AgentError::ScriptExhausted(self.consumed))?;
        self.consumed += 1;
        Ok(action_json(next))
    }
}

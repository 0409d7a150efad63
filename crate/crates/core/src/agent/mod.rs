//! Decision agents: the contract the traversal loop talks to, prompt
//! rendering, reply parsing, and three implementations (scripted replay,
//! ground-truth oracle, remote chat-completions endpoint).

pub mod oracle;
pub mod parse;
pub mod prompt;
pub mod remote;
pub mod scripted;

use std::time::Duration;

use image::RgbImage;
use thiserror::Error;

use crate::traversal::CandidateMenu;

pub use oracle::OracleAgent;
pub use parse::{parse_action, ParseError};
pub use prompt::{render_prompt, render_query_prompt, PromptTemplates};
pub use remote::{RemoteAgent, RemoteConfig};
pub use scripted::ScriptedAgent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("script exhausted after {0} actions")]
    ScriptExhausted(usize),
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("endpoint returned HTTP {0}")]
    HttpStatus(u16),
    #[error("request timed out")]
    Timeout,
    #[error("unexpected response body: {0}")]
    BadResponse(String),
}

/// One reasoning round as presented to an agent.
pub struct AgentRequest<'a> {
    pub system_prompt: &'a str,
    pub user_prompt: &'a str,
    pub grid_image: &'a RgbImage,
    /// 1-based round number.
    pub round_index: u32,
    pub timeout: Duration,
    /// Structured view of the actions the prompt lists.
    pub menu: &'a CandidateMenu,
}

/// Target/anchor extraction request issued once before traversal.
pub struct QueryRequest<'a> {
    pub system_prompt: &'a str,
    pub user_prompt: &'a str,
    pub raw_query: &'a str,
    pub vocabulary: &'a [String],
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub raw_text: String,
    pub parsed_action: Option<u32>,
}

/// The pluggable policy choosing each round's action. Implementations
/// return the raw reply text; the traversal loop parses and validates it.
pub trait DecisionAgent: Send {
    fn name(&self) -> &str;

    /// Reply to the extraction prompt. An empty or unparseable reply means
    /// the agent abstains and the lexicon fallback is used.
    fn extract_query(&mut self, _request: &QueryRequest<'_>) -> Result<String, AgentError> {
        Ok(String::new())
    }

    fn decide(&mut self, request: &AgentRequest<'_>) -> Result<String, AgentError>;
}

impl<A: DecisionAgent + ?Sized> DecisionAgent for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn extract_query(&mut self, request: &QueryRequest<'_>) -> Result<String, AgentError> {
        (**self).extract_query(request)
    }

    fn decide(&mut self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        (**self).decide(request)
    }
}

/// The reply body every agent is asked to produce.
pub fn action_json(index: u32) -> String {
    format!("{{\"NextAction\": {index}}}")
}

//! Prompt templates. Placeholders are `{name}` tokens replaced verbatim;
//! unknown tokens are left untouched so template files can contain braces
//! (the output-format example does).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::traversal::{ActionKind, CandidateMenu};

pub const DEFAULT_SYSTEM: &str = "\
You are a visual reasoning assistant that locates one object in a 3D indoor scene.

Environment:
- You see a grid image of camera frames. Earlier visited frames come first and the current frame follows; each cell is labeled \"frame <k>\".
- Every object has a Global Object ID in the format <class_label>_<index>.
- Object boxes are given as (center_x, center_y, center_z, size_x, size_y, size_z) in meters. The x axis points right, y points to the front, z points up.

Constraints:
- You have a maximum of {d_max} reasoning rounds. When they run out you must choose among the objects collected so far.
- Choose exactly one action from the numbered list.

Strategy:
- Use the spatial relations between objects to check the description.
- Switch frames when you are uncertain; select an object only when the description clearly fits it.

Output format:
Reply with a single JSON object and nothing else: {\"NextAction\": <number>}
";

pub const DEFAULT_USER: &str = "\
Query: {query}
Round {round}; up to {d_max} exploration rounds.{round_note}

Candidate actions:
{actions}
{relations}Answer with {\"NextAction\": <number>}.
";

pub const DEFAULT_QUERY_SYSTEM: &str = "\
You read referring expressions about objects in an indoor scene and name the object classes involved.
Reply with a single JSON object and nothing else: {\"target\": <label>, \"anchors\": [<labels>]}
";

pub const DEFAULT_QUERY_USER: &str = "\
Query: {query}
Known object classes: {vocabulary}
Which class is the target of the query, and which classes serve as anchors?
";

const FORCED_NOTE: &str = " This is the final round: pick the object that best matches the query.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub system: String,
    pub user: String,
    pub query_system: String,
    pub query_user: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: DEFAULT_SYSTEM.to_string(),
            user: DEFAULT_USER.to_string(),
            query_system: DEFAULT_QUERY_SYSTEM.to_string(),
            query_user: DEFAULT_QUERY_USER.to_string(),
        }
    }
}

impl PromptTemplates {
    /// Reads `system.txt`, `user.txt`, `query_system.txt` and `query_user.txt`
    /// from `dir`; missing files keep the built-in text.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = PromptTemplates::default();
        for (name, slot) in [
            ("system.txt", &mut t.system),
            ("user.txt", &mut t.user),
            ("query_system.txt", &mut t.query_system),
            ("query_user.txt", &mut t.query_user),
        ] {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(text) => *slot = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(t)
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

pub fn format_bbox(b: &[f64; 6]) -> String {
    format!("({:.2}, {:.2}, {:.2}, {:.2}, {:.2}, {:.2})", b[0], b[1], b[2], b[3], b[4], b[5])
}

pub fn action_line(index: u32, kind: &ActionKind) -> String {
    match kind {
        ActionKind::SwitchView { frame_index, edge, .. } => {
            let edge = match edge {
                crate::graph::ViewEdgeKind::Adjacent => "adjacent",
                crate::graph::ViewEdgeKind::Complementary => "complementary",
            };
            format!("[[[{index}]]] Switch to frame {frame_index} ({edge} view)")
        }
        ActionKind::SelectObject { object_id, bbox } => {
            format!("[[[{index}]]] Select {object_id} {}", format_bbox(bbox))
        }
    }
}

/// System and user prompt for one reasoning round. `forced` marks the final
/// pool-only round.
pub fn render_prompt(
    templates: &PromptTemplates,
    menu: &CandidateMenu,
    query: &str,
    round_index: u32,
    d_max: u32,
    forced: bool,
) -> (String, String) {
    let mut actions = String::new();
    for a in &menu.actions {
        let _ = writeln!(actions, "{}", action_line(a.index, &a.kind));
    }
    let mut relations = String::new();
    if !menu.relation_facts.is_empty() {
        relations.push_str("\nKnown spatial relations:\n");
        for fact in &menu.relation_facts {
            let _ = writeln!(relations, "{fact}");
        }
        relations.push('\n');
    }
    let d_max = d_max.to_string();
    let round = round_index.to_string();
    let vars = [
        ("d_max", d_max.as_str()),
        ("query", query),
        ("round", round.as_str()),
        ("round_note", if forced { FORCED_NOTE } else { "" }),
        ("actions", actions.as_str()),
        ("relations", relations.as_str()),
    ];
    (fill(&templates.system, &vars), fill(&templates.user, &vars))
}

pub fn render_query_prompt(templates: &PromptTemplates, query: &str, vocabulary: &[String]) -> (String, String) {
    let vocab = vocabulary.join(", ");
    let vars = [("query", query), ("vocabulary", vocab.as_str())];
    (fill(&templates.query_system, &vars), fill(&templates.query_user, &vars))
}

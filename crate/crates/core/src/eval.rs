//! Acc@IoU scoring of grounding traces against ground-truth boxes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou_3d, Aabb};
use crate::scene::parse_object_id;
use crate::traversal::{GroundingTrace, TerminationReason};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ground truth for query {0}")]
    MissingGroundTruth(String),
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub object_id: String,
    pub bbox: [f64; 6],
}

pub type GroundTruth = BTreeMap<String, GroundTruthEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Subset {
    Unique,
    Multiple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub scene_id: String,
    pub predicted_object_id: Option<String>,
    pub predicted_bbox: Option<[f64; 6]>,
    pub ground_truth_object_id: String,
    pub ground_truth_bbox: [f64; 6],
    pub iou: f64,
    pub hit_025: bool,
    pub hit_05: bool,
    pub correct_selection: bool,
    pub subset: Subset,
    pub agent_call_count: u32,
    pub termination_reason: TerminationReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitScore {
    pub count: usize,
    /// Percentages in [0, 100]; 0 for an empty split.
    pub acc_025: f64,
    pub acc_05: f64,
    pub selection_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub unique: SplitScore,
    pub multiple: SplitScore,
    pub overall: SplitScore,
    pub mean_agent_calls: f64,
    pub records: Vec<EvalRecord>,
}

/// A hit needs IoU at or above the threshold; failed runs score zero.
pub fn score_trace(trace: &GroundingTrace, gt: &GroundTruthEntry) -> EvalRecord {
    let failed = trace.termination_reason == TerminationReason::AgentFailure;
    let predicted = if failed { None } else { trace.final_bbox };
    let iou = predicted
        .map(|p| iou_3d(&Aabb::from_array(p), &Aabb::from_array(gt.bbox)))
        .unwrap_or(0.0);
    let class = parse_object_id(&gt.object_id).map(|(c, _)| c).unwrap_or(&gt.object_id);
    let subset = if trace.class_counts.get(class).copied().unwrap_or(0) == 1 {
        Subset::Unique
    } else {
        Subset::Multiple
    };
    EvalRecord {
        query_id: trace.query_id.clone().unwrap_or_default(),
        scene_id: trace.scene_id.clone(),
        predicted_object_id: if failed { None } else { trace.final_object_id.clone() },
        predicted_bbox: predicted,
        ground_truth_object_id: gt.object_id.clone(),
        ground_truth_bbox: gt.bbox,
        iou,
        hit_025: iou >= 0.25,
        hit_05: iou >= 0.5,
        correct_selection: !failed && trace.final_object_id.as_deref() == Some(gt.object_id.as_str()),
        subset,
        agent_call_count: trace.agent_call_count,
        termination_reason: trace.termination_reason,
    }
}

fn split(records: &[&EvalRecord]) -> SplitScore {
    if records.is_empty() {
        return SplitScore::default();
    }
    let n = records.len() as f64;
    let pct = |f: fn(&EvalRecord) -> bool| 100.0 * records.iter().filter(|r| f(r)).count() as f64 / n;
    SplitScore {
        count: records.len(),
        acc_025: pct(|r| r.hit_025),
        acc_05: pct(|r| r.hit_05),
        selection_accuracy: pct(|r| r.correct_selection),
    }
}

pub fn summarize(records: Vec<EvalRecord>) -> EvalSummary {
    let all: Vec<&EvalRecord> = records.iter().collect();
    let by = |s: Subset| all.iter().copied().filter(|r| r.subset == s).collect::<Vec<_>>();
    let mean_agent_calls = if all.is_empty() {
        0.0
    } else {
        all.iter().map(|r| r.agent_call_count as f64).sum::<f64>() / all.len() as f64
    };
    EvalSummary {
        unique: split(&by(Subset::Unique)),
        multiple: split(&by(Subset::Multiple)),
        overall: split(&all),
        mean_agent_calls,
        records,
    }
}

pub fn evaluate(traces: &[GroundingTrace], ground_truth: &GroundTruth) -> Result<EvalSummary, EvalError> {
    let mut records = Vec::with_capacity(traces.len());
    for t in traces {
        let id = t.query_id.clone().unwrap_or_default();
        let gt = ground_truth.get(&id).ok_or(EvalError::MissingGroundTruth(id))?;
        records.push(score_trace(t, gt));
    }
    records.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    Ok(summarize(records))
}

impl EvalSummary {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>7} {:>9} {:>9} {:>10}", "subset", "queries", "Acc@0.25", "Acc@0.5", "selection");
        for (name, s) in [("Unique", &self.unique), ("Multiple", &self.multiple), ("Overall", &self.overall)] {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>9.1} {:>9.1} {:>10.1}",
                name, s.count, s.acc_025, s.acc_05, s.selection_accuracy
            );
        }
        let _ = writeln!(out, "mean agent calls: {:.2}", self.mean_agent_calls);
        out
    }
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth, EvalError> {
    let read = |reason: String| EvalError::Read {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| read(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| read(e.to_string()))
}

/// Every `*.json` trace below `dir`, sorted by path.
pub fn load_traces(dir: &Path) -> Result<Vec<GroundingTrace>, EvalError> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| EvalError::Read {
            path: d.clone(),
            reason: e.to_string(),
        })?;
        for entry in entries.flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                files.push(p);
            }
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| EvalError::Read {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            GroundingTrace::from_json(&text).map_err(|e| EvalError::Read {
                path: p.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}
